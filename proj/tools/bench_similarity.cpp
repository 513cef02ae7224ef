// Benchmark: OpenMP similarity kernels against their serial references.
// Verifies bit-identical output, then reports wall time and speedup.

#include <chrono>
#include <cstdio>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "ctikg/simkernel.hpp"

using namespace ctikg;
using clock_type = std::chrono::steady_clock;

namespace {

double ms_since(clock_type::time_point start) {
    return std::chrono::duration<double, std::milli>(clock_type::now() - start).count();
}

VectorBatch random_batch(std::size_t rows, std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    VectorBatch batch(dim);
    std::vector<double> v(dim);
    for (std::size_t i = 0; i < rows; ++i) {
        for (auto& x : v)
            x = dist(rng);
        batch.push_back(v);
    }
    return batch;
}

template <typename F> double time_best_of(int repeats, F&& f) {
    double best = 1e300;
    for (int r = 0; r < repeats; ++r) {
        const auto start = clock_type::now();
        f();
        best = std::min(best, ms_since(start));
    }
    return best;
}

} // namespace

int main(int argc, char** argv) {
    std::size_t rows = 4000;
    std::size_t dim = 512;
    int repeats = 5;
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string flag = argv[i];
        const long value = std::stol(argv[i + 1]);
        if (flag == "--rows")
            rows = static_cast<std::size_t>(value);
        else if (flag == "--dim")
            dim = static_cast<std::size_t>(value);
        else if (flag == "--repeats")
            repeats = static_cast<int>(value);
        else {
            std::fprintf(stderr, "unknown flag %s (use --rows N --dim N --repeats N)\n",
                         flag.c_str());
            return 2;
        }
    }

    std::printf("openmp: %s (%u hardware threads)\n", openmp_enabled() ? "enabled" : "disabled",
                std::thread::hardware_concurrency());
    std::printf("batch: %zu x %zu\n", rows, dim);

    const VectorBatch batch = random_batch(rows, dim, 42);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> query(dim);
    for (auto& x : query)
        x = dist(rng);

    // cosine_scores: query against every row.
    std::vector<double> par_scores, ser_scores;
    const double t_scores_par = time_best_of(repeats, [&] { par_scores = cosine_scores(batch, query); });
    const double t_scores_ser =
        time_best_of(repeats, [&] { ser_scores = cosine_scores_serial(batch, query); });
    if (par_scores != ser_scores) {
        std::fprintf(stderr, "FAIL: cosine_scores parallel/serial outputs differ\n");
        return 1;
    }
    std::printf("cosine_scores    parallel %8.3f ms   serial %8.3f ms   speedup %.2fx\n",
                t_scores_par, t_scores_ser, t_scores_ser / t_scores_par);

    // threshold_pairs: pairwise adjacency at a mid threshold. Smaller batch —
    // the kernel is quadratic in rows.
    const std::size_t pair_rows = std::min<std::size_t>(rows, 1500);
    const VectorBatch pair_batch = random_batch(pair_rows, dim, 43);
    std::vector<std::pair<std::size_t, std::size_t>> par_pairs, ser_pairs;
    const double t_pairs_par =
        time_best_of(repeats, [&] { par_pairs = threshold_pairs(pair_batch, 0.05); });
    const double t_pairs_ser =
        time_best_of(repeats, [&] { ser_pairs = threshold_pairs_serial(pair_batch, 0.05); });
    if (par_pairs != ser_pairs) {
        std::fprintf(stderr, "FAIL: threshold_pairs parallel/serial outputs differ\n");
        return 1;
    }
    std::printf("threshold_pairs  parallel %8.3f ms   serial %8.3f ms   speedup %.2fx  "
                "(%zu rows, %zu pairs)\n",
                t_pairs_par, t_pairs_ser, t_pairs_ser / t_pairs_par, pair_rows,
                par_pairs.size());
    return 0;
}
