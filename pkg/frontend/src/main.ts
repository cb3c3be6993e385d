import { ApiClient } from "./api.js";
import { AnnotationApp } from "./app.js";

const root = document.getElementById("app");
if (root) {
  const app = new AnnotationApp(root, new ApiClient(""));
  void app.start();
}
