#include "brainalign/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace brainalign {

const SalienceTaxonomy& default_taxonomy() {
    static const SalienceTaxonomy taxonomy = [] {
        SalienceTaxonomy t;
        const std::vector<std::string> sc = {"person", "bird",     "cat",  "dog",
                                             "horse",  "sheep",    "cow",  "elephant",
                                             "bear",   "zebra",    "giraffe"};
        const std::vector<std::string> so = {
            "bicycle", "car",   "motorcycle", "airplane", "bus",          "train",
            "truck",   "boat",  "bench",      "chair",    "couch",        "bed",
            "dining table",     "toilet",     "sink",     "refrigerator", "clock"};
        const std::vector<std::string> inconspicuous = {
            "traffic light", "fire hydrant", "stop sign",    "parking meter", "backpack",
            "umbrella",      "handbag",      "tie",          "suitcase",      "frisbee",
            "skis",          "snowboard",    "sports ball",  "kite",          "baseball bat",
            "baseball glove","skateboard",   "surfboard",    "tennis racket", "bottle",
            "wine glass",    "cup",          "fork",         "knife",         "spoon",
            "bowl",          "banana",       "apple",        "sandwich",      "orange",
            "broccoli",      "carrot",       "hot dog",      "pizza",         "donut",
            "cake",          "potted plant", "tv",           "laptop",        "mouse",
            "remote",        "keyboard",     "cell phone",   "microwave",     "oven",
            "toaster",       "book",         "vase",         "scissors",      "teddy bear",
            "hair drier",    "toothbrush"};
        for (const auto& c : sc) t[c] = Salience::SC;
        for (const auto& c : so) t[c] = Salience::SO;
        for (const auto& c : inconspicuous) t[c] = Salience::I;
        return t;
    }();
    return taxonomy;
}

Salience salience_category(const std::string& label, const SalienceTaxonomy& taxonomy) {
    auto it = taxonomy.find(label);
    if (it == taxonomy.end()) throw std::invalid_argument("unknown class label: " + label);
    return it->second;
}

double iou(const LabeledBox& a, const LabeledBox& b) {
    if (a.x1 >= a.x2 || a.y1 >= a.y2 || b.x1 >= b.x2 || b.y1 >= b.y2) {
        throw std::invalid_argument("iou: degenerate box");
    }
    const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    const double inter = ix * iy;
    const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    return inter / uni;
}

GroundingReport grounding_accuracy(const std::vector<LabeledBox>& preds,
                                   const std::vector<LabeledBox>& gts,
                                   const SalienceTaxonomy& taxonomy,
                                   const std::vector<double>& thresholds) {
    if (preds.size() != gts.size()) {
        throw std::invalid_argument("grounding_accuracy: prediction count != query count");
    }
    GroundingReport report;
    for (const auto& name : {"A", "S", "SC", "SO", "I"}) {
        auto& b = report.buckets[name];
        for (double m : thresholds) b.acc[m] = 0.0;
    }

    for (std::size_t i = 0; i < gts.size(); ++i) {
        const double v = iou(preds[i], gts[i]);
        const Salience cat = salience_category(gts[i].label, taxonomy);
        std::vector<std::string> names = {"A"};
        switch (cat) {
            case Salience::SC: names.push_back("S"); names.push_back("SC"); break;
            case Salience::SO: names.push_back("S"); names.push_back("SO"); break;
            case Salience::I: names.push_back("I"); break;
        }
        for (const auto& name : names) {
            auto& bucket = report.buckets[name];
            ++bucket.count;
            bucket.mean_iou += v;
            for (auto& [m, acc] : bucket.acc) {
                if (v > m) acc += 1.0;
            }
        }
    }
    for (auto& [name, bucket] : report.buckets) {
        if (bucket.count == 0) continue;
        bucket.mean_iou /= static_cast<double>(bucket.count);
        for (auto& [m, acc] : bucket.acc) acc /= static_cast<double>(bucket.count);
    }
    return report;
}

namespace {

Matrix l2_normalize_rows(const Matrix& x) {
    Matrix out = x;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double n = out.row(i).norm();
        if (n == 0.0) throw std::invalid_argument("retrieval: zero-norm embedding row");
        out.row(i) /= n;
    }
    return out;
}

double pooled_top1(const Matrix& query, const Matrix& key, std::size_t pool, std::size_t trials,
                   Rng& rng) {
    if (query.rows() != key.rows() || query.cols() != key.cols()) {
        throw std::invalid_argument("retrieval: embedding shape mismatch");
    }
    const auto n = static_cast<std::size_t>(query.rows());
    if (pool > n) throw std::invalid_argument("retrieval: pool larger than gallery");
    if (pool < 2) throw std::invalid_argument("retrieval: pool must be >= 2");

    const Matrix q = l2_normalize_rows(query);
    const Matrix k = l2_normalize_rows(key);

    std::size_t hits = 0;
    for (std::size_t t = 0; t < trials; ++t) {
        for (std::size_t probe = 0; probe < n; ++probe) {
            // pool-1 distractors plus the paired row
            auto distractors = rng.sample_without_replacement(n - 1, pool - 1);
            double best = q.row(static_cast<Eigen::Index>(probe))
                              .dot(k.row(static_cast<Eigen::Index>(probe)));
            bool top = true;
            for (auto d : distractors) {
                const std::size_t idx = d < probe ? d : d + 1;  // skip the probe itself
                const double s = q.row(static_cast<Eigen::Index>(probe))
                                     .dot(k.row(static_cast<Eigen::Index>(idx)));
                if (s >= best) {
                    top = false;
                    break;
                }
            }
            if (top) ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(trials * n);
}

}  // namespace

double retrieval_forward(const Matrix& brain, const Matrix& image, std::size_t pool,
                         std::size_t trials, Rng& rng) {
    return pooled_top1(brain, image, pool, trials, rng);
}

double retrieval_backward(const Matrix& brain, const Matrix& image, std::size_t pool,
                          std::size_t trials, Rng& rng) {
    return pooled_top1(image, brain, pool, trials, rng);
}

double retrieval_exemplar(const Matrix& brain, const Matrix& gallery) {
    if (brain.rows() != gallery.rows()) {
        throw std::invalid_argument("retrieval_exemplar: row count mismatch");
    }
    const Matrix q = l2_normalize_rows(brain);
    const Matrix g = l2_normalize_rows(gallery);
    Matrix sims = q * g.transpose();
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < sims.rows(); ++i) {
        Eigen::Index best;
        sims.row(i).maxCoeff(&best);
        if (best == i) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(sims.rows());
}

RetrievalReport retrieval_report(const Matrix& brain, const Matrix& image, std::size_t pool,
                                 std::size_t trials, Rng& rng) {
    RetrievalReport r;
    r.pool_size = pool;
    r.trials = trials;
    r.forward_acc = retrieval_forward(brain, image, pool, trials, rng);
    r.backward_acc = retrieval_backward(brain, image, pool, trials, rng);
    r.exemplar_acc = retrieval_exemplar(brain, image);
    return r;
}

}  // namespace brainalign
