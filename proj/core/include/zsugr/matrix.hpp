#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace zsugr {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

inline bool all_finite(const Mat& m) { return m.allFinite(); }

inline void require_finite(const Mat& m, const std::string& what) {
    if (!m.allFinite()) {
        throw std::runtime_error("non-finite values in " + what);
    }
}

inline void require_shape(const Mat& m, Eigen::Index rows, Eigen::Index cols,
                          const std::string& what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw std::invalid_argument(what + ": expected " + std::to_string(rows) + "x" +
                                    std::to_string(cols) + ", got " +
                                    std::to_string(m.rows()) + "x" +
                                    std::to_string(m.cols()));
    }
}

} // namespace zsugr
