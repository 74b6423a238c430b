#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "pdmplab/potentials.hpp"

namespace pdmplab {

// minimise 0.5 v'Hv + c'v subject to -1 <= v_n <= 1
struct BoxQpProblem {
    Mat H;
    Vec c;
};

enum class BoxLabel { clippedPlus, clippedMinus, snapping };

// Minimiser with its KKT certificate: Hv + c + alpha - beta = 0 on the free
// block, alpha active only at v_n = +1, beta only at v_n = -1.
struct BoxQpSolution {
    Vec v;
    Vec alpha;
    Vec beta;
    std::vector<BoxLabel> labels;
    double objective = 0.0;
    // a coordinate sits exactly on the boundary with a zero multiplier;
    // labeled clipped (the constraint is active) and reported once on clog
    bool degenerate = false;
};

class QpSizeError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

BoxQpSolution solve_boxqp(const BoxQpProblem& p);

// Brute force over all 3^K active-set patterns; K <= 12.
BoxQpSolution solve_boxqp_oracle(const BoxQpProblem& p);

struct Classification {
    std::vector<int> clipped;   // |v_n| = 1 within 1e-9
    std::vector<int> snapping;  // strictly interior
};

Classification classify(const BoxQpSolution& sol);

}  // namespace pdmplab
