import type {
  ArrayPayload,
  Category,
  PanopticArrays,
  Report,
  ScoredInstancePayload,
  SegmentInfo,
} from "./types.js";

export class ServiceError extends Error {
  constructor(
    message: string,
    public readonly status: number,
  ) {
    super(message);
    this.name = "ServiceError";
  }
}

/** HTTP client for a running panopteval service. */
export class PanopticClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!response.ok) {
      let detail = `${response.status} ${response.statusText}`;
      try {
        const doc = (await response.json()) as { detail?: unknown };
        if (doc.detail) detail = String(doc.detail);
      } catch {
        // non-JSON error body: keep the status line
      }
      throw new ServiceError(detail, response.status);
    }
    return (await response.json()) as T;
  }

  async health(): Promise<boolean> {
    try {
      const response = await this.fetchImpl(`${this.baseUrl}/health`);
      return response.ok;
    } catch {
      return false;
    }
  }

  /** Evaluate one in-memory segment-id array pair. */
  async evaluatePair(request: {
    gt: ArrayPayload;
    gtSegments: SegmentInfo[];
    pred: ArrayPayload;
    predSegments: SegmentInfo[];
    categories: Category[];
    iouThreshold?: number;
  }): Promise<Report> {
    return this.post<Report>("/evaluate/pair", {
      gt: request.gt,
      gt_segments: request.gtSegments,
      pred: request.pred,
      pred_segments: request.predSegments,
      categories: request.categories,
      iou_threshold: request.iouThreshold ?? 0.5,
    });
  }

  /** Evaluate two directories of panoptic file pairs on the server. */
  async evaluateDirs(request: {
    gtDir: string;
    predDir: string;
    categoriesPath: string;
    iouThreshold?: number;
    threads?: number;
  }): Promise<Report> {
    return this.post<Report>("/evaluate/dirs", {
      gt_dir: request.gtDir,
      pred_dir: request.predDir,
      categories_path: request.categoriesPath,
      iou_threshold: request.iouThreshold ?? 0.5,
      threads: request.threads ?? 1,
    });
  }

  /** Resolve overlapping scored instances into a things-only panoptic map. */
  async resolveOverlaps(request: {
    width: number;
    height: number;
    instances: ScoredInstancePayload[];
    scoreThreshold?: number;
    keepFraction?: number;
  }): Promise<PanopticArrays> {
    return this.post<PanopticArrays>("/resolve", {
      width: request.width,
      height: request.height,
      instances: request.instances,
      score_threshold: request.scoreThreshold ?? 0.5,
      keep_fraction: request.keepFraction ?? 0.5,
    });
  }

  /** Merge a things-only map with a semantic labeling, things winning. */
  async fuse(request: {
    things: PanopticArrays;
    semantic: ArrayPayload;
    categories: Category[];
  }): Promise<PanopticArrays> {
    return this.post<PanopticArrays>("/fuse", {
      things: request.things,
      semantic: request.semantic,
      categories: request.categories,
    });
  }

  /** Load a panoptic file pair from the server's filesystem as arrays. */
  async loadPanoptic(request: {
    rasterPath: string;
    sidecarPath: string;
    categoriesPath: string;
  }): Promise<PanopticArrays> {
    return this.post<PanopticArrays>("/io/panoptic", {
      raster_path: request.rasterPath,
      sidecar_path: request.sidecarPath,
      categories_path: request.categoriesPath,
    });
  }
}
