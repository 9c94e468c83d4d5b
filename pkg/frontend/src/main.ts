/** Entry point: wire the controller to the page with a configurable base URL. */

import { AnnotationApi } from "./api.js";
import { startApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const api = new AnnotationApi(params.get("api") ?? "");

const root = document.getElementById("app");
if (root !== null) {
  startApp(root, api);
}
