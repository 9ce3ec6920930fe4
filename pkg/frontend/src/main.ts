import { fetchModelInfo, fetchSchema } from "./api.js";
import { WhatIfConsole } from "./ui.js";

async function boot(): Promise<void> {
  const root = document.getElementById("app");
  if (!root) throw new Error("missing #app mount point");
  try {
    const [schema, model] = await Promise.all([fetchSchema(), fetchModelInfo()]);
    const console_ = new WhatIfConsole(root, schema, model);
    await console_.start();
  } catch (err) {
    root.textContent = `decision service unavailable: ${String(err)}`;
  }
}

void boot();
