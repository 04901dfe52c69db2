/**
 * Service client. Every response is validated against the schema published
 * by the service itself before it reaches the UI.
 */

import type { LatentMapResponse, SynthesizeRequestBody, SynthesizeResponse } from "./types.js";
import { assertValid, type Schema } from "./validate.js";

export class ServiceError extends Error {
  constructor(message: string, readonly status: number | null = null) {
    super(message);
  }
}

export class ApiClient {
  private schemas: { map: Schema; synth: Schema } | null = null;

  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch.bind(globalThis),
  ) {}

  private async getJson(path: string): Promise<unknown> {
    let resp: Response;
    try {
      resp = await this.fetchImpl(this.baseUrl + path);
    } catch (err) {
      throw new ServiceError(`service unreachable at ${this.baseUrl}: ${String(err)}`);
    }
    const body = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      const detail = (body as { error?: string }).error ?? resp.statusText;
      throw new ServiceError(detail, resp.status);
    }
    return body;
  }

  async loadSchemas(): Promise<void> {
    const map = (await this.getJson("/schemas/latent_map_response.schema.json")) as Schema;
    const synth = (await this.getJson("/schemas/synthesize_response.schema.json")) as Schema;
    this.schemas = { map, synth };
  }

  private requireSchemas(): { map: Schema; synth: Schema } {
    if (!this.schemas) throw new ServiceError("schemas not loaded");
    return this.schemas;
  }

  async fetchLatentMap(): Promise<LatentMapResponse> {
    const payload = await this.getJson("/api/latents");
    return assertValid<LatentMapResponse>(payload, this.requireSchemas().map, "latent map");
  }

  async synthesize(body: SynthesizeRequestBody): Promise<SynthesizeResponse> {
    let resp: Response;
    try {
      resp = await this.fetchImpl(this.baseUrl + "/api/synthesize", {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      });
    } catch (err) {
      throw new ServiceError(`service unreachable: ${String(err)}`);
    }
    const payload = await resp.json().catch(() => ({}));
    if (!resp.ok) {
      const detail = (payload as { error?: string }).error ?? resp.statusText;
      throw new ServiceError(detail, resp.status);
    }
    return assertValid<SynthesizeResponse>(payload, this.requireSchemas().synth, "synthesis");
  }
}
