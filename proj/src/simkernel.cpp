#include "ctikg/simkernel.hpp"

#include <algorithm>
#include <cmath>

#include "ctikg/errors.hpp"

#ifdef CTIKG_HAVE_OPENMP
#include <omp.h>
#endif

namespace ctikg {

void VectorBatch::push_back(const std::vector<double>& v) {
    if (v.empty())
        throw InternalError("VectorBatch: empty vector");
    if (dim_ == 0)
        dim_ = v.size();
    if (v.size() != dim_)
        throw InternalError("VectorBatch: dimension mismatch");
    data_.insert(data_.end(), v.begin(), v.end());
}

double cosine_similarity(const double* a, const double* b, std::size_t dim) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0)
        return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw InternalError("cosine_similarity: size mismatch");
    if (a.empty())
        return 0.0;
    return cosine_similarity(a.data(), b.data(), a.size());
}

std::vector<double> cosine_scores_serial(const VectorBatch& batch,
                                         const std::vector<double>& query) {
    if (batch.rows() > 0 && query.size() != batch.dim())
        throw InternalError("cosine_scores: query dimension mismatch");
    std::vector<double> scores(batch.rows());
    for (std::size_t i = 0; i < batch.rows(); ++i)
        scores[i] = cosine_similarity(batch.row(i), query.data(), batch.dim());
    return scores;
}

std::vector<double> cosine_scores(const VectorBatch& batch, const std::vector<double>& query) {
    if (batch.rows() > 0 && query.size() != batch.dim())
        throw InternalError("cosine_scores: query dimension mismatch");
    std::vector<double> scores(batch.rows());
    const auto n = static_cast<std::ptrdiff_t>(batch.rows());
#ifdef CTIKG_HAVE_OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t i = 0; i < n; ++i)
        scores[static_cast<std::size_t>(i)] =
            cosine_similarity(batch.row(static_cast<std::size_t>(i)), query.data(), batch.dim());
    return scores;
}

std::vector<std::pair<std::size_t, std::size_t>>
threshold_pairs_serial(const VectorBatch& batch, double threshold, const AdmitFn& admit) {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    const std::size_t n = batch.rows();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (cosine_similarity(batch.row(i), batch.row(j), batch.dim()) < threshold)
                continue;
            if (admit && !admit(i, j))
                continue;
            pairs.emplace_back(i, j);
        }
    }
    return pairs;
}

std::vector<std::pair<std::size_t, std::size_t>>
threshold_pairs(const VectorBatch& batch, double threshold, const AdmitFn& admit) {
    const auto n = static_cast<std::ptrdiff_t>(batch.rows());
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
#ifdef CTIKG_HAVE_OPENMP
#pragma omp parallel
    {
        std::vector<std::pair<std::size_t, std::size_t>> local;
#pragma omp for schedule(dynamic, 8) nowait
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            const auto ui = static_cast<std::size_t>(i);
            for (std::size_t j = ui + 1; j < static_cast<std::size_t>(n); ++j) {
                if (cosine_similarity(batch.row(ui), batch.row(j), batch.dim()) < threshold)
                    continue;
                if (admit && !admit(ui, j))
                    continue;
                local.emplace_back(ui, j);
            }
        }
#pragma omp critical
        pairs.insert(pairs.end(), local.begin(), local.end());
    }
    std::sort(pairs.begin(), pairs.end());
#else
    pairs = threshold_pairs_serial(batch, threshold, admit);
    (void)n;
#endif
    return pairs;
}

bool openmp_enabled() {
#ifdef CTIKG_HAVE_OPENMP
    return true;
#else
    return false;
#endif
}

} // namespace ctikg
