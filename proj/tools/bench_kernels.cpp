// Timing comparison between the OpenMP scoring/resampling kernels and their
// serial reference twins, on synthetic inputs sized well past the bundled
// fixture. Prints one line per kernel: serial ms, parallel ms, speedup.

#include <chrono>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "icrs/eval.hpp"
#include "icrs/retrieval.hpp"
#include "icrs/rng.hpp"

using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string synth_doc(icrs::SplitMix64& rng, std::size_t words) {
    static const char* vocab[] = {"leather", "boot",  "black",   "warranty",
                                  "plot",    "witty", "director", "shelf",
                                  "durable", "cheap", "classic",  "band"};
    std::string doc;
    for (std::size_t i = 0; i < words; ++i) {
        doc += vocab[rng.next_below(12)];
        doc += ' ';
    }
    return doc;
}

template <typename Fn>
double time_best_of(int reps, Fn&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        auto t0 = Clock::now();
        fn();
        best = std::min(best, ms_since(t0));
    }
    return best;
}

void report(const char* name, double serial_ms, double parallel_ms) {
    std::printf("%-18s serial %9.2f ms   parallel %9.2f ms   speedup %.2fx\n",
                name, serial_ms, parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (built without OpenMP)\n");
#endif
    icrs::SplitMix64 rng(7);

    // BM25 over a synthetic candidate corpus
    {
        std::map<std::string, std::string> candidates;
        for (int i = 0; i < 4000; ++i)
            candidates["c" + std::to_string(i)] = synth_doc(rng, 120);
        std::string query = synth_doc(rng, 200);
        volatile double sink = 0;
        double serial = time_best_of(3, [&] {
            sink = icrs::retrieval::rank_lexical_serial(query, candidates, {})
                       .entries[0]
                       .score;
        });
        double parallel = time_best_of(3, [&] {
            sink =
                icrs::retrieval::rank_lexical(query, candidates, {}).entries[0].score;
        });
        (void)sink;
        report("bm25 rank", serial, parallel);
    }

    // dense ranking over unit vectors
    {
        const std::size_t dim = 1536;
        auto random_unit = [&] {
            icrs::retrieval::EmbeddingVector v;
            v.values.resize(dim);
            for (auto& x : v.values) x = rng.next_double() - 0.5;
            v.normalize();
            return v;
        };
        std::map<std::string, icrs::retrieval::EmbeddingVector> candidates;
        for (int i = 0; i < 20000; ++i)
            candidates["c" + std::to_string(i)] = random_unit();
        auto query = random_unit();
        volatile double sink = 0;
        double serial = time_best_of(3, [&] {
            sink = icrs::retrieval::rank_dense_serial(query, candidates)
                       .entries[0]
                       .score;
        });
        double parallel = time_best_of(3, [&] {
            sink = icrs::retrieval::rank_dense(query, candidates).entries[0].score;
        });
        (void)sink;
        report("dense rank", serial, parallel);
    }

    // bootstrap resampling
    {
        std::vector<double> samples;
        for (int i = 0; i < 5000; ++i) samples.push_back(rng.next_double());
        volatile double sink = 0;
        double serial = time_best_of(3, [&] {
            sink = icrs::eval::bootstrap_ci_serial(samples, 4000, 0.95, 99).ci_low;
        });
        double parallel = time_best_of(3, [&] {
            sink = icrs::eval::bootstrap_ci(samples, 4000, 0.95, 99).ci_low;
        });
        (void)sink;
        report("bootstrap", serial, parallel);
    }
    return 0;
}
