/** Input file: one `id<TAB>text` pair per line. */
import { readFileSync } from "node:fs";

export function parseTextsFile(path: string): Map<string, string> {
  const texts = new Map<string, string>();
  const raw = readFileSync(path, "utf-8");
  const lines = raw.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].replace(/\r$/, "");
    if (line === "") continue;
    const tab = line.indexOf("\t");
    if (tab < 1) {
      throw new Error(`${path} line ${i + 1}: expected "id<TAB>text"`);
    }
    const id = line.slice(0, tab);
    if (texts.has(id)) {
      throw new Error(`${path} line ${i + 1}: duplicate id ${id}`);
    }
    texts.set(id, line.slice(tab + 1));
  }
  if (texts.size === 0) {
    throw new Error(`${path}: no records`);
  }
  return texts;
}
