#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace arranger {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Tensor/graph shape inconsistencies (wrong rank, mismatched dims, ...).
class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

/// Malformed or out-of-contract input data (bad files, invalid documents).
class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

/// Non-finite values or other numeric failures.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ", ";
        os << s[i];
    }
    os << ')';
    return os.str();
}

inline bool shapes_equal(const Shape& a, const Shape& b) { return a == b; }

/// True if `suffix` matches the trailing dims of `s` (rank 0 matches anything).
inline bool is_suffix_shape(const Shape& s, const Shape& suffix) {
    if (suffix.size() > s.size()) return false;
    size_t off = s.size() - suffix.size();
    for (size_t i = 0; i < suffix.size(); ++i)
        if (s[off + i] != suffix[i]) return false;
    return true;
}

/// Deterministic random source. All sampling goes through explicit
/// algorithms (Box-Muller, modulo draw) so sequences do not depend on the
/// standard library's distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : engine_(seed) {}

    /// An Rng whose normal() is identically zero. Lets models be
    /// constructed for shape inspection without paying for initialization.
    static Rng zeros() {
        Rng r;
        r.zero_mode_ = true;
        return r;
    }

    uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n).
    uint64_t below(uint64_t n) { return engine_() % n; }

    /// Standard normal via Box-Muller (both outputs used, in order).
    double normal() {
        if (zero_mode_) return 0.0;
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::string save_state() const {
        std::ostringstream os;
        os << engine_ << ' ' << (have_spare_ ? 1 : 0) << ' ';
        os.precision(17);
        os << spare_;
        return os.str();
    }

    void load_state(const std::string& s) {
        std::istringstream is(s);
        int flag = 0;
        is >> engine_ >> flag >> spare_;
        if (is.fail()) throw DataError("Rng::load_state: malformed state string");
        have_spare_ = flag != 0;
    }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
    bool zero_mode_ = false;
};

}  // namespace arranger
