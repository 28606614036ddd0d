import { ApiClient } from "./api.js";
import { mountApp } from "./app.js";

mountApp(document, new ApiClient());
