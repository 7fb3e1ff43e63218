// Thin fetch client for the compression service.

import { SessionSnapshot, TraceDoc } from "./types.js";

export interface ApiErrorBody {
  status: number;
  code: string;
  message: string;
}

export class ApiError extends Error {
  constructor(public body: ApiErrorBody) {
    super(body.message);
  }
}

async function expectJson<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let body: ApiErrorBody;
    try {
      body = (await response.json()) as ApiErrorBody;
    } catch {
      body = { status: response.status, code: "HttpError", message: response.statusText };
    }
    throw new ApiError(body);
  }
  return (await response.json()) as T;
}

export async function createSession(
  instruction: string,
  image: string,
  planner: string,
  transport: string,
): Promise<{ id: string }> {
  const response = await fetch("/sessions", {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify({ instruction, image, planner, transport }),
  });
  return expectJson(response);
}

export async function getSession(id: string): Promise<SessionSnapshot> {
  return expectJson(await fetch(`/sessions/${encodeURIComponent(id)}`));
}

export async function getTrace(id: string): Promise<TraceDoc> {
  return expectJson(await fetch(`/sessions/${encodeURIComponent(id)}/trace`));
}

export async function postFollowup(
  id: string,
  body: { instruction: string },
): Promise<{ id: string; segment: number }> {
  const response = await fetch(`/sessions/${encodeURIComponent(id)}/message`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  return expectJson(response);
}
