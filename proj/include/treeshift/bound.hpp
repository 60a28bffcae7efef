#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "numeric.hpp"

namespace treeshift {

enum class Status { Exact, LowerBound, CertifiedInfinite, Unknown };

inline const char* to_string(Status s) {
    switch (s) {
        case Status::Exact: return "Exact";
        case Status::LowerBound: return "LowerBound";
        case Status::CertifiedInfinite: return "CertifiedInfinite";
        case Status::Unknown: return "Unknown";
    }
    return "Unknown";
}

inline int status_rank(Status s) {
    switch (s) {
        case Status::Exact: return 0;
        case Status::LowerBound: return 1;
        case Status::CertifiedInfinite: return 2;
        case Status::Unknown: return 3;
    }
    return 3;
}

inline Status worse(Status a, Status b) { return status_rank(a) >= status_rank(b) ? a : b; }

// Limits shared by all truncated computations.
struct Budget {
    int depth = 24;                    // truncation depth for c_p evidence
    std::int64_t vertices = 1'000'000; // subtree expansions per engine
    int max_period = 16;               // N_max for derived-tree sweeps
    int eps_steps = 8;                 // eps = 1, 1/2, ..., 2^-eps_steps
    int sample_depth = 6;              // vertex sample radius
    int sample_size = 64;
    int threads = 1;
    double tol = 1e-9;

    void validate() const {
        if (depth < 1 || depth > 1 << 16) throw std::invalid_argument("depth budget must be in [1, 65536]");
        if (vertices < 1) throw std::invalid_argument("vertex budget must be positive");
        if (max_period < 1 || max_period > 4096) throw std::invalid_argument("max period must be in [1, 4096]");
        if (eps_steps < 0 || eps_steps > 60) throw std::invalid_argument("eps steps must be in [0, 60]");
        if (sample_depth < 0 || sample_size < 1) throw std::invalid_argument("invalid vertex sample budget");
        if (threads < 1) throw std::invalid_argument("threads must be positive");
        if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
    }
};

struct Evidence {
    int depth = 0;
    double value = 0.0;
};

// Extended nonnegative real with certification status.
struct BoundEstimate {
    double value = 0.0;
    Status status = Status::Unknown;
    std::vector<Evidence> evidence;  // (m, c_p(V_m)) in increasing m
    double tolerance = 1e-9;
    double upper = kInf;             // certified upper bound
    double last_increment = kInf;
    std::string certificate;

    bool finite() const { return status != Status::CertifiedInfinite && value < kInf; }
    bool certified_finite() const { return upper < kInf; }
};

}  // namespace treeshift
