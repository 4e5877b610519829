#ifndef DTLAB_CORPUS_HPP
#define DTLAB_CORPUS_HPP

#include <cstdint>
#include <vector>

#include "dtlab/matrix.hpp"
#include "dtlab/rng.hpp"

namespace dtlab {

enum class Modality { kLanguageLike, kImageLike };

struct PretrainCorpusSpec {
  Modality modality = Modality::kLanguageLike;
  int vocab_size = 16;
  int sequence_length = 64;
  // language-like: order-2 Markov chain over a Zipf base distribution,
  // softened by transition_temperature.
  double transition_temperature = 1.0;
  double zipf_exponent = 1.1;
  // image-like: random rectangles and circles on a side x side canvas,
  // quantized to vocab_size palette entries, emitted in raster order.
  int image_side = 8;
  double shape_density = 0.5;

  void validate() const;
};

using TokenSequence = std::vector<std::uint32_t>;

struct Corpus {
  PretrainCorpusSpec spec;
  std::uint64_t seed = 0;
  std::vector<TokenSequence> sequences;
};

// Order-2 transition model used by the language-like generator. Exposed so
// tests can compare empirical bigram statistics against the exact table.
class MarkovTable {
 public:
  MarkovTable(const PretrainCorpusSpec& spec, Rng& rng);
  // p(next | a, b), a row of length vocab_size summing to 1.
  const Vector& row(int a, int b) const;
  const Vector& unigram() const { return unigram_; }

 private:
  int vocab_;
  Vector unigram_;
  std::vector<Vector> rows_;  // vocab^2 rows
};

Corpus generate_pretrain_corpus(const PretrainCorpusSpec& spec, int n_sequences,
                                Rng& rng);

}  // namespace dtlab

#endif
