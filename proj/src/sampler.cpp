#include "brainalign/sampler.hpp"

#include <cfenv>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace brainalign {

SamplingStrategy parse_strategy(const std::string& name) {
    if (name == "ours") return SamplingStrategy::Ours;
    if (name == "ours_r") return SamplingStrategy::OursR;
    if (name == "random") return SamplingStrategy::Random;
    if (name == "stratified") return SamplingStrategy::Stratified;
    throw std::invalid_argument("unknown sampling strategy: " + name);
}

std::string strategy_name(SamplingStrategy s) {
    switch (s) {
        case SamplingStrategy::Ours: return "ours";
        case SamplingStrategy::OursR: return "ours_r";
        case SamplingStrategy::Random: return "random";
        case SamplingStrategy::Stratified: return "stratified";
    }
    return "?";
}

std::map<std::string, double> subject_probabilities(const SubjectSizes& sizes) {
    if (sizes.empty()) throw std::invalid_argument("subject_probabilities: empty map");
    double total = 0.0;
    for (const auto& [id, n] : sizes) {
        if (n == 0) throw std::invalid_argument("subject_probabilities: zero count for " + id);
        total += static_cast<double>(n);
    }
    std::map<std::string, double> p;
    for (const auto& [id, n] : sizes) p[id] = static_cast<double>(n) / total;
    return p;
}

namespace {

// theta*B rounded half to even.
std::size_t dominant_count(double theta, std::size_t batch_size) {
    const double x = theta * static_cast<double>(batch_size);
    const double r = std::nearbyint(x);  // FE_TONEAREST is round-half-even
    return static_cast<std::size_t>(std::min(r, static_cast<double>(batch_size)));
}

// n indices from [0, size); without replacement when size >= n.
std::vector<std::size_t> draw_indices(std::size_t size, std::size_t n, Rng& rng) {
    if (n <= size) {
        if (n * 2 > size) return rng.sample_without_replacement(size, n);
        std::unordered_set<std::size_t> used;
        std::vector<std::size_t> out;
        out.reserve(n);
        while (out.size() < n) {
            const auto idx = static_cast<std::size_t>(rng.uniform_int(size));
            if (used.insert(idx).second) out.push_back(idx);
        }
        return out;
    }
    std::vector<std::size_t> out(n);
    for (auto& v : out) v = static_cast<std::size_t>(rng.uniform_int(size));
    return out;
}

}  // namespace

BatchPlan compose_batch(const SubjectSizes& sizes, std::size_t batch_size, double theta,
                        SamplingStrategy strategy, Rng& rng) {
    if (batch_size == 0) throw std::invalid_argument("compose_batch: batch_size must be >= 1");
    if (theta < 0.0 || theta > 1.0) throw std::invalid_argument("compose_batch: theta not in [0,1]");
    const auto probs = subject_probabilities(sizes);  // also validates sizes

    BatchPlan plan;
    plan.entries.reserve(batch_size);

    if (sizes.size() == 1) {
        const auto& [id, n] = *sizes.begin();
        plan.dominant_subject = id;
        for (auto idx : draw_indices(n, batch_size, rng)) plan.entries.push_back({id, idx});
        return plan;
    }

    if (strategy == SamplingStrategy::Random) {
        std::size_t total = 0;
        for (const auto& [id, n] : sizes) total += n;
        for (std::size_t i = 0; i < batch_size; ++i) {
            auto pooled = static_cast<std::size_t>(rng.uniform_int(total));
            for (const auto& [id, n] : sizes) {
                if (pooled < n) {
                    plan.entries.push_back({id, pooled});
                    break;
                }
                pooled -= n;
            }
        }
        return plan;
    }

    if (strategy == SamplingStrategy::Stratified) {
        const std::size_t k = sizes.size();
        const std::size_t base = batch_size / k;
        std::size_t remainder = batch_size % k;
        for (const auto& [id, n] : sizes) {
            std::size_t quota = base + (remainder > 0 ? 1 : 0);
            if (remainder > 0) --remainder;
            for (auto idx : draw_indices(n, quota, rng)) plan.entries.push_back({id, idx});
        }
        return plan;
    }

    // ours / ours_r: dominant subject drawn with probability p_k
    const double u = rng.uniform();
    double acc = 0.0;
    std::string dominant = sizes.rbegin()->first;
    for (const auto& [id, p] : probs) {
        acc += p;
        if (u < acc) {
            dominant = id;
            break;
        }
    }
    plan.dominant_subject = dominant;

    const std::size_t n_dom = dominant_count(theta, batch_size);
    for (auto idx : draw_indices(sizes.at(dominant), n_dom, rng)) {
        plan.entries.push_back({dominant, idx});
    }

    const std::size_t n_rest = batch_size - n_dom;
    if (strategy == SamplingStrategy::Ours) {
        // pooled-uniform over the union of the other subjects
        std::vector<std::pair<std::string, std::size_t>> others;  // (id, size)
        std::size_t pool = 0;
        for (const auto& [id, n] : sizes) {
            if (id == dominant) continue;
            others.emplace_back(id, n);
            pool += n;
        }
        for (auto pooled : draw_indices(pool, n_rest, rng)) {
            for (const auto& [id, n] : others) {
                if (pooled < n) {
                    plan.entries.push_back({id, pooled});
                    break;
                }
                pooled -= n;
            }
        }
    } else {  // OursR: subject first, then a sample within it
        std::vector<std::string> others;
        for (const auto& [id, n] : sizes) {
            if (id != dominant) others.push_back(id);
        }
        for (std::size_t i = 0; i < n_rest; ++i) {
            const auto& id = others[rng.uniform_int(others.size())];
            plan.entries.push_back({id, static_cast<std::size_t>(rng.uniform_int(sizes.at(id)))});
        }
    }
    return plan;
}

SamplerStats batch_statistics(const std::vector<BatchPlan>& plans) {
    if (plans.empty()) throw std::invalid_argument("batch_statistics: no plans");
    SamplerStats stats;
    std::size_t total_entries = 0;
    std::size_t plans_with_dominant = 0;
    double dom_frac_sum = 0.0;
    for (const auto& plan : plans) {
        total_entries += plan.entries.size();
        for (const auto& e : plan.entries) stats.sample_frequency[e.subject_id] += 1.0;
        if (!plan.dominant_subject.empty()) {
            ++plans_with_dominant;
            stats.dominant_frequency[plan.dominant_subject] += 1.0;
            std::size_t dom = 0;
            for (const auto& e : plan.entries) {
                if (e.subject_id == plan.dominant_subject) ++dom;
            }
            dom_frac_sum += static_cast<double>(dom) / static_cast<double>(plan.entries.size());
        }
    }
    for (auto& [id, v] : stats.sample_frequency) v /= static_cast<double>(total_entries);
    if (plans_with_dominant > 0) {
        for (auto& [id, v] : stats.dominant_frequency) {
            v /= static_cast<double>(plans_with_dominant);
        }
        stats.dominant_fraction_mean = dom_frac_sum / static_cast<double>(plans_with_dominant);
    }
    return stats;
}

}  // namespace brainalign
