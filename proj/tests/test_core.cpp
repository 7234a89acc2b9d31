#include <doctest.h>

#include "brainalign/rng.hpp"
#include "brainalign/types.hpp"

using namespace brainalign;

TEST_CASE("rng determinism: identical seeds give identical streams") {
    Rng a(0), b(0);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng distinct seeds diverge") {
    Rng a(0), b(1);
    bool differ = false;
    for (int i = 0; i < 100; ++i) differ |= (a.next_u64() != b.next_u64());
    CHECK(differ);
}

TEST_CASE("rng uniform_int frequencies") {
    Rng rng(42);
    const int n = 1'000'000;
    int counts[4] = {0, 0, 0, 0};
    for (int i = 0; i < n; ++i) ++counts[rng.uniform_int(4)];
    for (int c : counts) {
        CHECK(static_cast<double>(c) / n == doctest::Approx(0.25).epsilon(0.04));
    }
}

TEST_CASE("rng normal has roughly unit variance") {
    Rng rng(7);
    double sum = 0, sq = 0;
    const int n = 200'000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    CHECK(sum / n == doctest::Approx(0.0).epsilon(1).scale(0.02));
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("rng beta stays in (0,1)") {
    Rng rng(3);
    for (int i = 0; i < 1000; ++i) {
        const double x = rng.beta(0.2, 0.2);
        CHECK(x > 0.0);
        CHECK(x < 1.0);
    }
}

namespace {

std::vector<SubjectSpec> two_specs() { return {{"S1", 12}, {"S2", 8}}; }

BrainSample sample_for(const std::string& id, Eigen::Index dim) {
    BrainSample s;
    s.subject_id = id;
    s.voxels = Vector::Zero(dim);
    return s;
}

}  // namespace

TEST_CASE("validate_dataset accepts a conforming dataset") {
    std::vector<BrainSample> samples = {sample_for("S1", 12), sample_for("S2", 8)};
    CHECK(validate_dataset(samples, two_specs()).ok());
}

TEST_CASE("validate_dataset flags a voxel length mismatch") {
    std::vector<BrainSample> samples = {sample_for("S1", 10)};
    auto report = validate_dataset(samples, two_specs());
    REQUIRE(report.issues.size() == 1);
    CHECK(report.issues[0].kind == "length_mismatch");
}

TEST_CASE("validate_dataset flags a degenerate box") {
    auto s = sample_for("S1", 12);
    s.boxes.push_back({"cat", 0.5, 0.5, 0.4, 0.9});  // x1 >= x2
    auto report = validate_dataset({s}, two_specs());
    REQUIRE(report.issues.size() == 1);
    CHECK(report.issues[0].kind == "degenerate_box");
}

TEST_CASE("validate_dataset flags an unknown subject") {
    auto report = validate_dataset({sample_for("S9", 5)}, two_specs());
    REQUIRE(report.issues.size() == 1);
    CHECK(report.issues[0].kind == "unknown_subject");
}

TEST_CASE("validation report is empty iff invariants hold, random corruption") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        auto specs = two_specs();
        std::vector<BrainSample> samples;
        for (int i = 0; i < 5; ++i) {
            const auto& spec = specs[rng.uniform_int(2)];
            auto s = sample_for(spec.subject_id, static_cast<Eigen::Index>(spec.voxel_dim));
            s.boxes.push_back({"dog", 0.1, 0.1, 0.6, 0.7});
            samples.push_back(std::move(s));
        }
        bool corrupted = false;
        if (rng.uniform() < 0.5) {
            corrupted = true;
            auto& victim = samples[rng.uniform_int(samples.size())];
            switch (rng.uniform_int(3)) {
                case 0: victim.voxels.resize(victim.voxels.size() + 1); break;
                case 1: victim.boxes[0].x2 = victim.boxes[0].x1; break;
                default: victim.subject_id = "nobody"; break;
            }
        }
        CHECK(validate_dataset(samples, specs).ok() == !corrupted);
    }
}
