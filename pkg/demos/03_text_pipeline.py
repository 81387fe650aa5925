"""The text side: tokens, vocabularies, dataset files, stored weights.

Walks a sentence through tokenize -> vocabulary -> padded id sequence,
round-trips a dataset through its on-disk format, loads word vectors from
the text embedding format, and saves/reloads encoder weights bit-exactly.
"""

import tempfile
from pathlib import Path

from febench import (Dataset, Encoder, LabeledExample, build_vocab, encode,
                     load_dataset, tokenize)
from febench.encoders import load_weights, save_weights
from febench.text import decode, load_embeddings, save_dataset


def main():
    sentence = "The cat sat, the cat napped."
    tokens = tokenize(sentence)
    print(f"tokens: {tokens}")

    vocab = build_vocab([sentence, "the dog sat"], max_size=12)
    print(f"vocabulary ({vocab.size} entries): {vocab.tokens()}")

    ids, valid = encode(sentence, vocab, max_len=14)
    print(f"encoded ({valid} valid of {len(ids)}): {ids.tolist()}")
    print(f"decoded back: {decode(ids, vocab)}")
    print()

    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)

        dataset = Dataset(
            name="pets", task_kind="single_label", label_space=("cat", "dog"),
            train=(LabeledExample("the cat sat", frozenset({"cat"})),
                   LabeledExample("the dog sat", frozenset({"dog"}))),
            test=(LabeledExample("a cat napped", frozenset({"cat"})),))
        save_dataset(dataset, root / "pets", fmt="jsonl")
        reloaded = load_dataset(root / "pets")
        print(f"dataset round-trip: {len(reloaded.train)} train docs, "
              f"labels {reloaded.label_space}, equal: {reloaded == dataset}")

        vectors = root / "vectors.txt"
        vectors.write_text("cat 0.1 0.2 0.3\ndog 0.4 0.5 0.6\n"
                           "sat 0.0 -0.1 0.2\n")
        table = load_embeddings(vectors, seed=1)
        print(f"embeddings: {table.vocab.size} rows x {table.dimension} dims, "
              f"cat -> {table.vector('cat').round(2).tolist()}")
        print()

        encoder = Encoder.from_preset("tiny", vocab_size=vocab.size,
                                      seed=11)
        path = root / "tiny.weights"
        written = save_weights(encoder.weights, path)
        restored = load_weights(path, config=encoder.config)
        identical = restored.byte_image() == encoder.weights.byte_image()
        print(f"weight file: {written} bytes for "
              f"{encoder.param_count:,} parameters, "
              f"reload bit-identical: {identical}")


if __name__ == "__main__":
    main()
