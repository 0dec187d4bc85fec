/**
 * Long-running fitness worker: one JSON request per stdin line, one JSON
 * response per stdout line.  Exits 0 on a `{"shutdown": true}` message
 * or end of input.  All library chatter is rerouted to stderr so stdout
 * stays protocol-clean.
 */

const toStderr = (...parts: unknown[]): void => {
  process.stderr.write(parts.map(String).join(" ") + "\n");
};
console.log = toStderr;
console.info = toStderr;
console.warn = toStderr;

const { initBackend } = await import("./backend.js");
await initBackend();
const { handleRequest } = await import("./handler.js");
const readline = await import("node:readline");

const rl = readline.createInterface({ input: process.stdin, terminal: false });
for await (const line of rl) {
  const trimmed = line.trim();
  if (!trimmed) continue;
  let message: Record<string, unknown>;
  try {
    message = JSON.parse(trimmed);
  } catch {
    toStderr("worker: ignoring malformed request line");
    continue;
  }
  if (message.shutdown) {
    process.exit(0);
  }
  const response = handleRequest(message);
  process.stdout.write(JSON.stringify(response) + "\n");
}
process.exit(0);
