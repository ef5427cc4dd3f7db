"""Decompose a generated passage into subclaims, fully offline.

A deterministic mock stands in for the completion endpoint so the demo runs
without network access; swap in HttpCompletionClient for a real endpoint.
"""

from claimdecomp import (MockCompletionClient, assemble_prompt, builtin_configs,
                         decompose_passage, default_bank, retrieve_examples)
from claimdecomp.corpus import ExampleBank, make_passage

# ---------------------------------------------------------------------------
# A passage is a generated biography: topic, the LM that wrote it, the text.
passage = make_passage(
    topic="Ada Example",
    generator="demo-lm",
    text="Ada Example was born in Zurich in 1901. She directed nine films.",
)
print(f"passage has {len(passage.sentences)} sentences:")
for sentence in passage.sentences:
    print(f"  [{sentence.index}] {sentence.text}")

# ---------------------------------------------------------------------------
# Each method couples an instruction with static and retrieved in-context
# examples. The bundled bank carries 21 manually decomposed sentences.
bank = default_bank()
config = builtin_configs()["rnd"].with_bank(bank)
print(f"\nmethod {config.name!r}: {config.static_count} static + "
      f"{config.retrieved_count} retrieved examples")

pool = ExampleBank(entries=bank.entries[config.static_count:])
retrieved = retrieve_examples(pool, passage.sentences[0].text,
                              config.retrieved_count)
print("retrieved example:", retrieved[0].sentence[:60], "...")

prompt = assemble_prompt(config, passage.sentences[0].text, retrieved,
                         budget=3584)
print(f"prompt holds {prompt.static_used + prompt.retrieved_used} example "
      f"blocks, ~{len(prompt.text)} chars")

# ---------------------------------------------------------------------------
# The mock answers with canned decompositions keyed on the target sentence.
client = MockCompletionClient(rules=[
    ("Ada Example was born in Zurich in 1901.",
     "- Ada Example was born in Zurich.\n- Ada Example was born in 1901."),
    ("She directed nine films.",
     "- She directed films.\n- The number of films she directed is nine."),
])

claims = decompose_passage(config, passage, client)
print("\nsubclaims:")
for claim in claims:
    print(f"  s{claim.sentence_index}#{claim.ordinal}: {claim.text}")
