#pragma once

#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace iacforge::eval {

/// Tokenization for BLEU: maximal runs of [A-Za-z0-9_] are word tokens;
/// every other non-whitespace character is its own single-character token.
inline std::vector<std::string> bleu_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  };
  for (char c : text) {
    bool word = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                c == '_';
    if (word) {
      current += c;
    } else {
      flush();
      if (c != ' ' && c != '\t' && c != '\n' && c != '\r') tokens.push_back(std::string(1, c));
    }
  }
  flush();
  return tokens;
}

namespace detail {

inline std::map<std::string, long> ngram_counts(const std::vector<std::string>& tokens,
                                                std::size_t n) {
  std::map<std::string, long> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t k = 0; k < n; ++k) {
      if (k) key += '\x1f';
      key += tokens[i + k];
    }
    counts[key] += 1;
  }
  return counts;
}

struct PooledCounts {
  long matched[4] = {0, 0, 0, 0};
  long total[4] = {0, 0, 0, 0};
  long candidate_len = 0;
  long reference_len = 0;

  void accumulate(const std::string& candidate, const std::string& reference) {
    std::vector<std::string> c = bleu_tokenize(candidate);
    std::vector<std::string> r = bleu_tokenize(reference);
    candidate_len += static_cast<long>(c.size());
    reference_len += static_cast<long>(r.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      auto cc = ngram_counts(c, n);
      auto rc = ngram_counts(r, n);
      for (const auto& [gram, count] : cc) {
        total[n - 1] += count;
        auto it = rc.find(gram);
        if (it != rc.end()) matched[n - 1] += std::min(count, it->second);  // clipped
      }
    }
  }

  /// N=4, uniform weights, piecewise brevity penalty, no smoothing: a zero
  /// at any n-gram level zeroes the score.
  [[nodiscard]] double score() const {
    if (candidate_len == 0) return 0.0;
    double log_sum = 0.0;
    for (int n = 0; n < 4; ++n) {
      if (total[n] == 0 || matched[n] == 0) return 0.0;
      log_sum += 0.25 * std::log(static_cast<double>(matched[n]) /
                                 static_cast<double>(total[n]));
    }
    double bp = candidate_len >= reference_len
                    ? 1.0
                    : std::exp(1.0 - static_cast<double>(reference_len) /
                                         static_cast<double>(candidate_len));
    return 100.0 * bp * std::exp(log_sum);
  }
};

}  // namespace detail

/// Corpus BLEU over candidate/reference pairs (pooled modified n-gram
/// counts), on the 0-100 scale.
inline double bleu_corpus(const std::vector<std::pair<std::string, std::string>>& pairs) {
  detail::PooledCounts pooled;
  for (const auto& [candidate, reference] : pairs) pooled.accumulate(candidate, reference);
  return pooled.score();
}

/// Sentence BLEU: a corpus of one.
inline double bleu(const std::string& candidate, const std::string& reference) {
  return bleu_corpus({{candidate, reference}});
}

}  // namespace iacforge::eval
