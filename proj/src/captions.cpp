#include "brainalign/captions.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <unistd.h>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace brainalign {

std::vector<std::string> tokenize_caption(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char ch : text) {
        if (std::isalnum(ch)) {
            cur.push_back(static_cast<char>(std::tolower(ch)));
        } else if (std::isspace(ch)) {
            if (!cur.empty()) {
                tokens.push_back(cur);
                cur.clear();
            }
        }
        // punctuation is dropped
    }
    if (!cur.empty()) tokens.push_back(cur);
    return tokens;
}

namespace {

using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts ngrams(const std::vector<std::string>& tokens, std::size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key;
        for (std::size_t j = 0; j < n; ++j) {
            if (j) key.push_back('\x1f');
            key += tokens[i + j];
        }
        ++counts[key];
    }
    return counts;
}

}  // namespace

double bleu_k(const std::string& candidate, const std::vector<std::string>& references,
              std::size_t k) {
    if (references.empty()) throw std::invalid_argument("bleu_k: empty references");
    if (k < 1) throw std::invalid_argument("bleu_k: k must be >= 1");

    const auto cand = tokenize_caption(candidate);
    const std::size_t c = cand.size();
    if (c == 0) return 0.0;

    std::vector<std::vector<std::string>> refs;
    refs.reserve(references.size());
    for (const auto& r : references) refs.push_back(tokenize_caption(r));

    // closest reference length; ties favor the shorter
    std::size_t r_len = refs[0].size();
    for (const auto& r : refs) {
        const auto d_new = r.size() > c ? r.size() - c : c - r.size();
        const auto d_old = r_len > c ? r_len - c : c - r_len;
        if (d_new < d_old || (d_new == d_old && r.size() < r_len)) r_len = r.size();
    }

    double log_sum = 0.0;
    for (std::size_t n = 1; n <= k; ++n) {
        const auto cand_ngrams = ngrams(cand, n);
        std::size_t total = 0, clipped = 0;
        for (const auto& [gram, count] : cand_ngrams) total += count;
        if (total == 0) return 0.0;
        NgramCounts max_ref;
        for (const auto& r : refs) {
            for (const auto& [gram, count] : ngrams(r, n)) {
                max_ref[gram] = std::max(max_ref[gram], count);
            }
        }
        for (const auto& [gram, count] : cand_ngrams) {
            auto it = max_ref.find(gram);
            if (it != max_ref.end()) clipped += std::min(count, it->second);
        }
        if (clipped == 0) return 0.0;
        log_sum += std::log(static_cast<double>(clipped) / static_cast<double>(total));
    }

    const double bp =
        c > r_len ? 1.0
                  : std::exp(1.0 - static_cast<double>(r_len) / static_cast<double>(c));
    return bp * std::exp(log_sum / static_cast<double>(k));
}

double rouge_l(const std::string& candidate, const std::string& reference, double beta) {
    const auto cand = tokenize_caption(candidate);
    const auto ref = tokenize_caption(reference);
    if (cand.empty() || ref.empty()) return 0.0;

    std::vector<std::vector<std::size_t>> dp(cand.size() + 1,
                                             std::vector<std::size_t>(ref.size() + 1, 0));
    for (std::size_t i = 1; i <= cand.size(); ++i) {
        for (std::size_t j = 1; j <= ref.size(); ++j) {
            dp[i][j] = cand[i - 1] == ref[j - 1] ? dp[i - 1][j - 1] + 1
                                                 : std::max(dp[i - 1][j], dp[i][j - 1]);
        }
    }
    const auto lcs = static_cast<double>(dp[cand.size()][ref.size()]);
    if (lcs == 0.0) return 0.0;
    const double p = lcs / static_cast<double>(cand.size());
    const double r = lcs / static_cast<double>(ref.size());
    const double b2 = beta * beta;
    return (1.0 + b2) * p * r / (r + b2 * p);
}

double ScorerResult::mean() const {
    if (scores.empty()) return 0.0;
    return std::accumulate(scores.begin(), scores.end(), 0.0) /
           static_cast<double>(scores.size());
}

void ScorerRegistry::register_scorer(const std::string& name, const std::string& command) {
    commands_[name] = command;
}

bool ScorerRegistry::has(const std::string& name) const { return commands_.count(name) > 0; }

ScorerResult ScorerRegistry::score(const std::string& name,
                                   const std::vector<CaptionPair>& pairs) const {
    ScorerResult result;
    auto it = commands_.find(name);
    if (it == commands_.end()) {
        result.error = "unavailable";
        return result;
    }

    const std::string in_path = "/tmp/brainalign_scorer_in_" + std::to_string(::getpid());
    const std::string out_path = "/tmp/brainalign_scorer_out_" + std::to_string(::getpid());
    {
        std::ofstream in(in_path);
        for (const auto& pair : pairs) {
            in << pair.candidate;
            for (const auto& r : pair.references) in << '\t' << r;
            in << '\n';
        }
    }
    const std::string cmd = it->second + " < " + in_path + " > " + out_path;
    const int rc = std::system(cmd.c_str());
    if (rc != 0) {
        result.error = "scorer command failed with status " + std::to_string(rc);
        std::remove(in_path.c_str());
        std::remove(out_path.c_str());
        return result;
    }

    std::ifstream out(out_path);
    std::string line;
    while (std::getline(out, line)) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(line, &pos);
            result.scores.push_back(v);
        } catch (const std::exception&) {
            result.error = "malformed scorer output line: " + line;
            break;
        }
    }
    std::remove(in_path.c_str());
    std::remove(out_path.c_str());
    if (!result.error.empty()) {
        result.scores.clear();
        return result;
    }
    if (result.scores.size() != pairs.size()) {
        result.error = "scorer emitted " + std::to_string(result.scores.size()) + " scores for " +
                       std::to_string(pairs.size()) + " pairs";
        result.scores.clear();
        return result;
    }
    result.available = true;
    return result;
}

}  // namespace brainalign
