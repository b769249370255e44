/** Payload shapes of the /api endpoints. The UI renders these verbatim and
 * never derives labels on its own. */

export type NeLabel =
  | "persName"
  | "orgName"
  | "geogName"
  | "placeName"
  | "date"
  | "time";

export type SeedLabel = NeLabel | "none";

export interface NodeBrief {
  id: number;
  title: string;
  kind: "article" | "category";
  resolved: string | null;
  seed: SeedLabel | null;
}

export interface Resolution {
  id: number;
  label: string | null;
  provenance: "seed" | "inherited" | null;
  distance: number | null;
  path_count: number;
  competitors: Record<string, number>;
}

export interface NodeDetail extends NodeBrief {
  parents: NodeBrief[];
  children: NodeBrief[];
  children_total: number;
  resolution: Resolution;
}

export interface Conflict {
  id: number;
  title: string;
  label: string | null;
  distance: number;
  competitors: Record<string, number>;
}

export interface Coverage {
  label_counts: Record<string, number>;
  articles_total: number;
  articles_labeled: number;
  percent_labeled: number;
  conflicts: Conflict[];
}

export interface SeedEntry {
  id: number;
  label: SeedLabel;
  title: string;
}
