// Two-level category tree, kept in sync with the server's default taxonomy.
// Top-level keys are what the classifier scores; second-level labels are
// annotation metadata shown in the picker.

export const TAXONOMY: Record<string, readonly string[]> = {
  sexual_suggestive: ["explicit_nudity", "adult_toys", "sexual_activity", "suggestive"],
  weaponry: ["firearms", "blades", "explosives"],
  drug_smoke: ["drug_paraphernalia", "pills", "smoking"],
};

export const TOP_LEVEL_CATEGORIES = Object.keys(TAXONOMY);

const DISPLAY_NAMES: Record<string, string> = {
  sexual_suggestive: "sexual / suggestive",
  weaponry: "weaponry",
  drug_smoke: "drug & smoking",
};

export function displayName(category: string): string {
  return DISPLAY_NAMES[category] ?? category.replace(/_/g, " ");
}

export function isTopLevel(category: string): boolean {
  return category in TAXONOMY;
}

export function isValidPath(top: string, second: string | null): boolean {
  if (!isTopLevel(top)) return false;
  return second === null || TAXONOMY[top].includes(second);
}
