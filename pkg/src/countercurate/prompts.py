"""Frozen LLM prompt templates and request objects.

The template constants below are contract text: requests must be built by
appending the query block to the unmodified template, and the golden-hash
tests pin every byte. The attribute template intentionally keeps its odd
spacing, curly quotes and the blouse/dress mixup in its worked example;
do not "fix" it, downstream parsing is tolerant by design.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Literal

ATTRIBUTE_NEGATIVES_TEMPLATE = """You are given an image, the same image but with bounding boxes, its corresponding caption and an enhanced form of the caption. Their format is as follows:
Original Caption: A child in a pink dress is helping a baby in a blue dress climb up a set of stairs in an entry way.
Enhanced Caption: [/EN#1/people A child] in [/EN#2/clothing a pink dress] helping  [/EN#3/people a baby] in  [/EN#4/clothing a blue dress] climb up [/EN#5/other a set of stairs] in [/EN#6/scene an entry way].
In the enhanced caption, there is no new data, but that each “entity” is marked by a pair of square brackets. Most entities each correspond to one or more bounding boxes, which will be specified. For example, entity 1 in the sentence is “A child”, which is marked by a tag [/EN#1/people …]. “people” states the type of the entity. If entity is “other”, then there are no restrictions applied.

You are tasked to:

Generate a caption that changes the object being discussed in exactly one of the entities. You MUST ensure that the new object is the same type of entity as the original object as specified in the tag. For example: [/EN#1/people A child] => [/EN#1/people An adult] is allowed, but [/EN#1/people A child] => [/EN#1/people A cat] is not allowed because a cat is not “people”;

Generate a caption that changes the qualifier (such as an adjective of a quantifier) that describes the object in exactly one of the entities. For example: [/EN#2/clothing a pink dress] => [/EN#2/clothing a green dress].

Generate, if possible, a caption that reverses two of the entities or their qualifiers such that the original sentence structure is not changed, but produces a negative prompt. For example, given two entities “a green dress” and “a blue blouse”, you can either swap the two entities’ order or swap the adjectives and produce “a blue dress” and “a green blouse”. If you cannot generate one, report None.

All in all, the new description must meet all of these requirements:

1. The change of attribute must be sufficiently different to make the new description inaccurate, but it should also be somewhat related to be challenging to an AI model.

2. Compared to the original description, the new description must differ in only one attribute. All other details must be kept the same.

3. The new description must mimic the sentence structure of the original description.

4. The new description must be fluent, logical, and grammatically correct.

5. Carefully look at the image, and give negative captions that are reasonable given the objects’ position, size, and relationship to the overall setting.

6. Pose challenging(difficult enough) negative captions so that a large multimodal text generation model should struggle to distinguish the original caption v.s. negative caption.

Here are some examples whose output format you should follow:
Original Caption: A child in a pink dress is helping a baby in a blue dress climb up a set of stairs in an entry way.
Enhanced Caption: [/EN#1/people A child] in [/EN#2/clothing a pink blouse] helping  [/EN#3/people a baby] in  [/EN#4/clothing a blue dress] climb up [/EN#5/other a set of stairs] in [/EN#6/scene an entry way].
Bounding Boxes: #1: purple
Your answer:
{“noun”: {“action”: (1, “a child”, “an adult”), “caption”: “An adult in a green dress is helping a baby in a blue dress climb up a set of stairs in an entry way.”]}, “adjective”: {“action”: (2, “a pink dress”, “a green dress”), “caption”: “A child in a green dress is helping a baby in a blue dress climb up a set of stairs in an entry way.”}, “reverse”: {“action”: (2, 4), “caption”: “A child in a blue blouse is helping a baby in a pink dress climb up a set of stairs in an entry way.”}}"""

CAPTION_EXPANSION_TEMPLATE = """I will give you a caption in the format "A is above B." You need to expand the sentence such that the meaning "A is above B" is preserved and your answer is reasonable for a human to understand what you're describing. Do not make the answer too long; one long sentence is enough. For example, if i give you "a man is under a dog", a good answer would be "there is a man resting on the ground, and there is a dog lying above him." One restriction: A and B do not overlap. This means that if I ask you to expand "a hat is below water", you must not assume that the hat is below water. Remember that you MUST include both A and B in your answer, like my example did."""


def template_sha256(template: str) -> str:
    return hashlib.sha256(template.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class LlmRequest:
    """A fully rendered text request for an LLM service.

    `images` pairs a role tag ("original", "boxed") with an image reference.
    """

    user: str
    system: str | None = None
    images: tuple[tuple[str, str], ...] = field(default_factory=tuple)
    expected_format: Literal["attribute_json", "free_text"] = "free_text"


def build_attribute_prompt(original_caption: str, enhanced_caption: str, legend: str) -> str:
    """Attribute-negatives prompt: frozen template plus one query block."""
    return (
        ATTRIBUTE_NEGATIVES_TEMPLATE
        + "\n\nOriginal Caption: "
        + original_caption
        + "\nEnhanced Caption: "
        + enhanced_caption
        + "\nBounding Boxes: "
        + legend
        + "\nYour answer:"
    )


def build_expansion_request(vanilla_caption: str) -> LlmRequest:
    """Request asking the LLM to expand a terse above/below caption."""
    if not vanilla_caption:
        raise ValueError("empty caption")
    return LlmRequest(
        user=CAPTION_EXPANSION_TEMPLATE + "\n\n" + vanilla_caption,
        expected_format="free_text",
    )
