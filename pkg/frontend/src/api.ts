// Thin typed client for the gallery backend. All numbers shown in the UI
// come from these endpoints; the frontend never recomputes scores or recall.

export type Verdict = "unlabeled" | "true" | "false";

export interface Region {
  rank: number;
  score: number;
  box: [number, number, number, number];
  image_id: string;
  verdict: Verdict;
}

export interface RegionsResponse {
  run: string;
  mode: string;
  regions: Region[];
}

export interface MetricsResponse {
  run: string;
  gt_total: number;
  k: number[];
  human: number[] | null;
  auto: number[] | null;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private base: string = "",
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(this.base + path);
    if (!resp.ok) throw new ApiError(resp.status, `GET ${path}: ${resp.status}`);
    return (await resp.json()) as T;
  }

  listRuns(): Promise<{ runs: string[] }> {
    return this.get("/runs");
  }

  regions(run: string): Promise<RegionsResponse> {
    return this.get(`/regions?run=${encodeURIComponent(run)}`);
  }

  metrics(run: string): Promise<MetricsResponse> {
    return this.get(`/metrics?run=${encodeURIComponent(run)}`);
  }

  cropUrl(run: string, rank: number): string {
    return `${this.base}/crops/${rank}.png?run=${encodeURIComponent(run)}`;
  }

  async label(run: string, rank: number, verdict: Verdict): Promise<Verdict> {
    const resp = await this.fetchFn(
      `${this.base}/labels?run=${encodeURIComponent(run)}`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ rank, verdict }),
      },
    );
    if (!resp.ok) {
      throw new ApiError(resp.status, `POST /labels: ${resp.status}`);
    }
    const body = (await resp.json()) as { verdict: Verdict };
    return body.verdict;
  }
}
