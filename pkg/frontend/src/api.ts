import type {
  Coverage,
  NodeBrief,
  NodeDetail,
  Resolution,
  SeedEntry,
  SeedLabel,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

/** Thin typed client over the service's /api endpoints. */
export class ApiClient {
  constructor(private base: string = "") {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await fetch(this.base + path, init);
    } catch (err) {
      throw new ApiError(0, `network failure: ${String(err)}`);
    }
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        /* not JSON, keep the status text */
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  async searchNodes(query: string, limit = 50): Promise<NodeBrief[]> {
    const q = encodeURIComponent(query);
    const body = await this.request<{ nodes: NodeBrief[] }>(
      `/api/nodes?q=${q}&limit=${limit}`,
    );
    return body.nodes;
  }

  getNode(id: number, offset = 0, limit = 50): Promise<NodeDetail> {
    return this.request<NodeDetail>(`/api/nodes/${id}?offset=${offset}&limit=${limit}`);
  }

  putSeed(id: number, label: SeedLabel): Promise<{ ok: boolean; node: NodeBrief }> {
    return this.request(`/api/seeds/${id}`, {
      method: "PUT",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ label }),
    });
  }

  deleteSeed(id: number): Promise<{ ok: boolean; node: NodeBrief }> {
    return this.request(`/api/seeds/${id}`, { method: "DELETE" });
  }

  getCoverage(): Promise<Coverage> {
    return this.request<Coverage>("/api/coverage");
  }

  getLabel(id: number): Promise<Resolution> {
    return this.request<Resolution>(`/api/labels/${id}`);
  }

  async getSeeds(): Promise<SeedEntry[]> {
    const body = await this.request<{ seeds: SeedEntry[] }>("/api/seeds");
    return body.seeds;
  }
}

/** Seed export in the service's `node-id TAB label` text format. */
export function seedsToTsv(seeds: SeedEntry[]): string {
  return seeds.map((s) => `${s.id}\t${s.label}`).join("\n") + (seeds.length ? "\n" : "");
}
