#include "dtlab/corpus.hpp"

#include <cmath>

namespace dtlab {

void PretrainCorpusSpec::validate() const {
  require(vocab_size >= 2, "PretrainCorpusSpec: vocab_size must be >= 2");
  require(sequence_length >= 2, "PretrainCorpusSpec: sequence_length must be >= 2");
  require(transition_temperature >= 0.0,
          "PretrainCorpusSpec: temperature must be >= 0");
  if (modality == Modality::kImageLike) {
    require(image_side >= 2, "PretrainCorpusSpec: image_side must be >= 2");
    require(image_side * image_side == sequence_length,
            "PretrainCorpusSpec: sequence_length must equal image_side^2");
    require(shape_density >= 0.0, "PretrainCorpusSpec: shape_density must be >= 0");
  }
}

namespace {

Vector softmax_with_temperature(const Vector& scores, double temperature) {
  const int n = static_cast<int>(scores.size());
  Vector p = Vector::Zero(n);
  if (temperature <= 1e-12) {  // argmax limit
    Index arg = 0;
    scores.maxCoeff(&arg);
    p[arg] = 1.0;
    return p;
  }
  Vector z = scores / temperature;
  const double mx = z.maxCoeff();
  p = (z.array() - mx).exp().matrix();
  p /= p.sum();
  return p;
}

int sample_discrete(const Vector& p, Rng& rng) {
  double u = rng.uniform();
  double acc = 0.0;
  const int n = static_cast<int>(p.size());
  for (int i = 0; i < n; ++i) {
    acc += p[i];
    if (u < acc) return i;
  }
  return n - 1;
}

}  // namespace

MarkovTable::MarkovTable(const PretrainCorpusSpec& spec, Rng& rng)
    : vocab_(spec.vocab_size) {
  // Heavy-tailed base: Zipf weights over token ranks.
  Vector log_zipf(vocab_);
  for (int c = 0; c < vocab_; ++c)
    log_zipf[c] = -spec.zipf_exponent * std::log(static_cast<double>(c + 1));
  unigram_ = softmax_with_temperature(log_zipf, 1.0);

  rows_.resize(static_cast<std::size_t>(vocab_) * vocab_);
  for (int a = 0; a < vocab_; ++a) {
    for (int b = 0; b < vocab_; ++b) {
      Vector scores(vocab_);
      for (int c = 0; c < vocab_; ++c) scores[c] = log_zipf[c] + rng.gumbel();
      rows_[static_cast<std::size_t>(a) * vocab_ + b] =
          softmax_with_temperature(scores, spec.transition_temperature);
    }
  }
}

const Vector& MarkovTable::row(int a, int b) const {
  return rows_[static_cast<std::size_t>(a) * vocab_ + b];
}

namespace {

TokenSequence sample_language_sequence(const PretrainCorpusSpec& spec,
                                       const MarkovTable& table, Rng& rng) {
  TokenSequence seq(static_cast<std::size_t>(spec.sequence_length));
  seq[0] = static_cast<std::uint32_t>(sample_discrete(table.unigram(), rng));
  seq[1] = static_cast<std::uint32_t>(sample_discrete(table.unigram(), rng));
  for (int t = 2; t < spec.sequence_length; ++t) {
    const auto& p = table.row(static_cast<int>(seq[t - 2]),
                              static_cast<int>(seq[t - 1]));
    seq[static_cast<std::size_t>(t)] =
        static_cast<std::uint32_t>(sample_discrete(p, rng));
  }
  return seq;
}

TokenSequence sample_image_sequence(const PretrainCorpusSpec& spec, Rng& rng) {
  const int side = spec.image_side;
  std::vector<std::uint32_t> canvas(static_cast<std::size_t>(side) * side, 0);
  const int n_shapes = static_cast<int>(std::floor(spec.shape_density * 8.0 + 0.5));
  for (int s = 0; s < n_shapes; ++s) {
    const auto color = static_cast<std::uint32_t>(
        1 + rng.uniform_index(static_cast<std::uint64_t>(spec.vocab_size - 1)));
    const bool rect = rng.bernoulli(0.5);
    const int cx = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side)));
    const int cy = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side)));
    const int r = 1 + static_cast<int>(rng.uniform_index(
                          static_cast<std::uint64_t>(std::max(1, side / 3))));
    for (int y = 0; y < side; ++y) {
      for (int x = 0; x < side; ++x) {
        bool inside;
        if (rect) {
          inside = std::abs(x - cx) <= r && std::abs(y - cy) <= r;
        } else {
          const int dx = x - cx;
          const int dy = y - cy;
          inside = dx * dx + dy * dy <= r * r;
        }
        if (inside) canvas[static_cast<std::size_t>(y) * side + x] = color;
      }
    }
  }
  return canvas;
}

}  // namespace

Corpus generate_pretrain_corpus(const PretrainCorpusSpec& spec, int n_sequences,
                                Rng& rng) {
  spec.validate();
  require(n_sequences >= 1, "generate_pretrain_corpus: n_sequences must be >= 1");
  Corpus corpus;
  corpus.spec = spec;
  corpus.seed = rng.seed();
  corpus.sequences.reserve(static_cast<std::size_t>(n_sequences));
  if (spec.modality == Modality::kLanguageLike) {
    Rng table_rng = rng.derive(0x7AB1E);
    MarkovTable table(spec, table_rng);
    for (int i = 0; i < n_sequences; ++i) {
      Rng sr = rng.derive(0x5E0 + static_cast<std::uint64_t>(i));
      corpus.sequences.push_back(sample_language_sequence(spec, table, sr));
    }
  } else {
    for (int i = 0; i < n_sequences; ++i) {
      Rng sr = rng.derive(0x5E0 + static_cast<std::uint64_t>(i));
      corpus.sequences.push_back(sample_image_sequence(spec, sr));
    }
  }
  return corpus;
}

}  // namespace dtlab
