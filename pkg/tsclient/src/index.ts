export * from "./values.js";
export * from "./codec.js";
export * from "./wire.js";
export * from "./client.js";
