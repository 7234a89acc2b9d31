#pragma once

#include <map>
#include <string>
#include <vector>

#include "brainalign/rng.hpp"
#include "brainalign/types.hpp"

namespace brainalign {

enum class Salience { SC, SO, I };

/// Class label -> salience bucket; exactly 80 classes (11 SC, 17 SO, 52 I).
using SalienceTaxonomy = std::map<std::string, Salience>;

/// The 80-class COCO taxonomy grouped by visual prominence.
const SalienceTaxonomy& default_taxonomy();

Salience salience_category(const std::string& label, const SalienceTaxonomy& taxonomy);

/// Intersection-over-union of two valid boxes; 0 when disjoint.
double iou(const LabeledBox& a, const LabeledBox& b);

struct GroundingBucket {
    std::size_t count = 0;
    double mean_iou = 0.0;
    std::map<double, double> acc;  // threshold m -> acc@m (IoU strictly greater)
};

struct GroundingReport {
    // Buckets: "A" = all, "S" = SC+SO, plus "SC", "SO", "I".
    std::map<std::string, GroundingBucket> buckets;
};

/// One predicted box per ground-truth query, paired by index. Categories come
/// from the ground-truth labels via the taxonomy.
GroundingReport grounding_accuracy(const std::vector<LabeledBox>& preds,
                                   const std::vector<LabeledBox>& gts,
                                   const SalienceTaxonomy& taxonomy,
                                   const std::vector<double>& thresholds = {0.3, 0.5, 0.7});

struct RetrievalReport {
    double forward_acc = 0.0;
    double backward_acc = 0.0;
    double exemplar_acc = 0.0;
    std::size_t pool_size = 0;
    std::size_t trials = 0;
};

/// Top-1 cosine identification of the paired image row among a sampled pool.
/// Every row serves as probe once per trial.
double retrieval_forward(const Matrix& brain, const Matrix& image, std::size_t pool,
                         std::size_t trials, Rng& rng);

/// Mirror of forward with the roles of brain and image swapped.
double retrieval_backward(const Matrix& brain, const Matrix& image, std::size_t pool,
                          std::size_t trials, Rng& rng);

/// Fraction of rows whose top-1 match over the full gallery is their own pair.
double retrieval_exemplar(const Matrix& brain, const Matrix& gallery);

RetrievalReport retrieval_report(const Matrix& brain, const Matrix& image, std::size_t pool,
                                 std::size_t trials, Rng& rng);

}  // namespace brainalign
