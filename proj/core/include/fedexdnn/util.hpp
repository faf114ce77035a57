#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace fedexdnn {

// Thrown for violated call contracts (bad shapes, invalid arguments,
// malformed config). The CLI maps these to exit code 2.
struct ContractError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Thrown for runtime/numeric failures (NaN loss, degenerate inputs at run
// time, I/O errors). The CLI maps these to exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// splitmix64 step, used for seed derivation.
std::uint64_t mix64(std::uint64_t x);

// Stable per-(master, client, round) seed so runs are reproducible and
// clients stay independent.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t client_id, std::uint64_t round);

// Deterministic RNG. All distributions are hand-rolled on top of mt19937_64
// so that streams are identical across platforms and standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(mix64(seed)) {}

    std::uint64_t next() { return gen_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller (no cached spare, to keep the stream
    // independent of call patterns)
    double normal();

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices drawn from [0, n)
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::mt19937_64 gen_;
};

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Level comes from FEDEXDNN_LOG in {error,warn,info,debug}; default warn.
LogLevel log_level();
void log_message(LogLevel level, const std::string& msg);

inline void log_error(const std::string& m) { log_message(LogLevel::Error, m); }
inline void log_warn(const std::string& m) { log_message(LogLevel::Warn, m); }
inline void log_info(const std::string& m) { log_message(LogLevel::Info, m); }
inline void log_debug(const std::string& m) { log_message(LogLevel::Debug, m); }

// FNV-1a over bytes, hex-encoded; used for config content hashes.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace fedexdnn
