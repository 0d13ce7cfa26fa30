// Rating rubric, embedded verbatim. The service serves the same strings
// from /guidelines; shared/guidelines.json pins both sides to one wording
// and the test suites on each side compare against it.

import type { Score } from "./types.js";

export interface RubricEntry {
  score: Score;
  label: string;
  description: string;
}

export const RUBRIC: readonly RubricEntry[] = [
  {
    score: 5,
    label: "5 points",
    description:
      "a perfect translation. The meaning and the style are reproduced " +
      "completely, the grammar and word choice are correct, the text looks natural.",
  },
  {
    score: 4,
    label: "4 points",
    description:
      "a good translation. The meaning is reproduced completely or almost " +
      "completely, the style and the word choice are natural for the target language.",
  },
  {
    score: 3,
    label: "3 points",
    description:
      "an acceptable translation. The general meaning is reproduced; the " +
      "mistakes in word choice and grammar do not hinder understanding; most " +
      "of the text is grammatically correct and in the target language.",
  },
  {
    score: 2,
    label: "2 points",
    description:
      "a bad translation. The text is mainly understandable and mainly in " +
      "the target language, but there are critical mistakes in meaning, " +
      "grammar, or word choice.",
  },
  {
    score: 1,
    label: "1 point",
    description:
      "a useless translation. A large part of the text is in the wrong " +
      "language, or is incomprehensible, or has little relation to the original text.",
  },
];
