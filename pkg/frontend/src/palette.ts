import type { SeedLabel } from "./types.js";

/** Fixed label palette: the six main categories plus the explicit "none"
 * exclusion. Subcategory seeding is out of scope for the UI. */
export const PALETTE: SeedLabel[] = [
  "persName",
  "orgName",
  "geogName",
  "placeName",
  "date",
  "time",
  "none",
];

export const LABEL_COLORS: Record<string, string> = {
  persName: "#d95f5f",
  orgName: "#5f87d9",
  geogName: "#4fa36a",
  placeName: "#b68a3e",
  date: "#8a5fd9",
  time: "#d95fb4",
  none: "#9a9a9a",
};

export function labelColor(label: string | null): string {
  return label !== null && label in LABEL_COLORS ? LABEL_COLORS[label]! : "#dddddd";
}
