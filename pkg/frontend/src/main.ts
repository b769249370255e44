import { ApiClient } from "./api.js";
import { App } from "./app.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? "";
const root = document.getElementById("app");
if (root === null) throw new Error("missing #app mount point");
const app = new App(root, new ApiClient(base));
void app.start();
