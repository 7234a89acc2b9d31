#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace brainalign {

/// Lowercase, strip punctuation, split on whitespace.
std::vector<std::string> tokenize_caption(const std::string& text);

/// BLEU-k: geometric mean of clipped 1..k-gram precisions times the brevity
/// penalty, closest reference length as the effective length.
double bleu_k(const std::string& candidate, const std::vector<std::string>& references,
              std::size_t k);

/// LCS-based F-measure with beta = 1.2.
double rouge_l(const std::string& candidate, const std::string& reference, double beta = 1.2);

struct CaptionPair {
    std::string candidate;
    std::vector<std::string> references;
};

struct ScorerResult {
    bool available = false;
    std::string error;                // set when the scorer misbehaved
    std::vector<double> scores;       // one per pair when available
    double mean() const;
};

/// External caption scorers, one command per metric. Protocol: one line per
/// pair on stdin ("candidate<TAB>ref1<TAB>ref2..."), one decimal score per
/// line on stdout. Unregistered metrics degrade to "unavailable".
class ScorerRegistry {
  public:
    void register_scorer(const std::string& name, const std::string& command);
    bool has(const std::string& name) const;
    ScorerResult score(const std::string& name, const std::vector<CaptionPair>& pairs) const;

  private:
    std::map<std::string, std::string> commands_;
};

}  // namespace brainalign
