"""The five-point rating rubric shown to annotators.

The wording is the campaign's single source of truth: the guidelines
endpoint serves it and the browser UI embeds the same strings, so tests
can compare the two verbatim.
"""

RUBRIC: tuple[tuple[int, str, str], ...] = (
    (5, "5 points", "a perfect translation. The meaning and the style are "
        "reproduced completely, the grammar and word choice are correct, "
        "the text looks natural."),
    (4, "4 points", "a good translation. The meaning is reproduced completely "
        "or almost completely, the style and the word choice are natural "
        "for the target language."),
    (3, "3 points", "an acceptable translation. The general meaning is "
        "reproduced; the mistakes in word choice and grammar do not hinder "
        "understanding; most of the text is grammatically correct and in "
        "the target language."),
    (2, "2 points", "a bad translation. The text is mainly understandable "
        "and mainly in the target language, but there are critical mistakes "
        "in meaning, grammar, or word choice."),
    (1, "1 point", "a useless translation. A large part of the text is in "
        "the wrong language, or is incomprehensible, or has little relation "
        "to the original text."),
)


def guidelines_payload() -> dict:
    return {
        "scale": [
            {"score": score, "label": label, "description": text}
            for score, label, text in RUBRIC
        ]
    }
