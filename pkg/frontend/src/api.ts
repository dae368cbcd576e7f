import type { ApiErrorBody, AppConfig, ScenarioRequestBody, ScenarioResponse } from "./types";

export class ApiError extends Error {
  code: string;
  details: unknown;

  constructor(body: ApiErrorBody, status: number) {
    super(`${body.code} (${status}): ${body.message}`);
    this.code = body.code;
    this.details = body.details;
  }
}

export class NetworkError extends Error {}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function toJson<T>(response: Response): Promise<T> {
  return (await response.json()) as T;
}

export async function postScenario(
  apiBase: string,
  body: ScenarioRequestBody,
  fetchImpl: FetchLike = fetch,
): Promise<ScenarioResponse> {
  let response: Response;
  try {
    response = await fetchImpl(`${apiBase}/api/v1/scenario`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  } catch (err) {
    throw new NetworkError(String(err));
  }
  if (!response.ok) {
    throw new ApiError(await toJson<ApiErrorBody>(response), response.status);
  }
  return toJson<ScenarioResponse>(response);
}

export async function fetchConfig(fetchImpl: FetchLike = fetch): Promise<AppConfig> {
  const response = await fetchImpl("/config.json");
  if (!response.ok) {
    throw new NetworkError(`config.json unavailable: ${response.status}`);
  }
  return toJson<AppConfig>(response);
}
