#pragma once
// Embedding-similarity kernels. The two hot loops of the pipeline — scoring a
// query against a demonstration pool and building the pairwise merge adjacency
// — run data-parallel when OpenMP is enabled. Serial reference implementations
// stay available for tests and for the comparison benchmark; both paths must
// produce bit-identical results.

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

namespace ctikg {

// Row-major batch of equally sized vectors.
class VectorBatch {
public:
    VectorBatch() = default;
    explicit VectorBatch(std::size_t dim) : dim_(dim) {}

    std::size_t dim() const { return dim_; }
    std::size_t rows() const { return dim_ == 0 ? 0 : data_.size() / dim_; }
    const double* row(std::size_t i) const { return data_.data() + i * dim_; }

    // First push fixes the dimension when constructed without one.
    void push_back(const std::vector<double>& v);

private:
    std::size_t dim_ = 0;
    std::vector<double> data_;
};

// Cosine similarity; 0.0 when either vector has zero norm. Sizes must agree.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);
double cosine_similarity(const double* a, const double* b, std::size_t dim);

// scores[i] = cosine(batch.row(i), query).
std::vector<double> cosine_scores(const VectorBatch& batch, const std::vector<double>& query);
std::vector<double> cosine_scores_serial(const VectorBatch& batch,
                                         const std::vector<double>& query);

// Unordered pairs (i, j) with i < j, cosine >= threshold, and — when an admit
// predicate is given — admit(i, j). Output is sorted by (i, j) ascending, so
// the schedule never shows through.
using AdmitFn = std::function<bool(std::size_t, std::size_t)>;
std::vector<std::pair<std::size_t, std::size_t>>
threshold_pairs(const VectorBatch& batch, double threshold, const AdmitFn& admit = {});
std::vector<std::pair<std::size_t, std::size_t>>
threshold_pairs_serial(const VectorBatch& batch, double threshold, const AdmitFn& admit = {});

// True when the library was built with OpenMP support.
bool openmp_enabled();

} // namespace ctikg
