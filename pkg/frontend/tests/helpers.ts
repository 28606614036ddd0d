import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const here = dirname(fileURLToPath(import.meta.url));

/** Parse one recorded API response from tests/fixtures/. */
export function loadFixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(here, "fixtures", name), "utf8")) as T;
}

/** The real page markup, body content only, script tags dropped. */
export function pageBody(): string {
  const html = readFileSync(join(here, "..", "public", "index.html"), "utf8");
  const body = html.match(/<body>([\s\S]*)<\/body>/);
  if (!body || body[1] === undefined) throw new Error("index.html has no body");
  return body[1].replace(/<script[\s\S]*?<\/script>/g, "");
}
