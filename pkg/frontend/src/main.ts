/** Entry point: read the examiner id, start a session, render the app. */

import { LabelerApi } from "./api.js";
import { LabelerSession } from "./session.js";
import { LabelerApp } from "./ui.js";

function examinerId(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("examiner");
  if (fromQuery) return fromQuery;
  const answer = window.prompt("Examiner id:");
  if (!answer) throw new Error("an examiner id is required");
  return answer.trim();
}

const root = document.getElementById("app");
if (root === null) throw new Error("missing #app container");

const session = new LabelerSession(new LabelerApi(""), examinerId());
void new LabelerApp(root, session).start();
