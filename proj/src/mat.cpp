#include "latentforge/mat.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace latentforge {

Mat::Mat(int rows_, int cols_, float fill) {
    if (rows_ <= 0 || cols_ <= 0) {
        throw std::invalid_argument("Mat: dimensions must be positive");
    }
    rows = rows_;
    cols = cols_;
    a.assign(static_cast<std::size_t>(rows) * cols, fill);
}

Mat matmul(const Mat& x, const Mat& y) {
    if (x.cols != y.rows) {
        throw std::invalid_argument("matmul: inner dimensions disagree");
    }
    Mat out(x.rows, y.cols);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < x.rows; ++r) {
        for (int c = 0; c < y.cols; ++c) {
            double acc = 0.0;
            for (int k = 0; k < x.cols; ++k) {
                acc += static_cast<double>(x.at(r, k)) * static_cast<double>(y.at(k, c));
            }
            out.at(r, c) = static_cast<float>(acc);
        }
    }
    return out;
}

Mat matmul_nt(const Mat& x, const Mat& y) {
    if (x.cols != y.cols) {
        throw std::invalid_argument("matmul_nt: inner dimensions disagree");
    }
    Mat out(x.rows, y.rows);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < x.rows; ++r) {
        for (int c = 0; c < y.rows; ++c) {
            double acc = 0.0;
            for (int k = 0; k < x.cols; ++k) {
                acc += static_cast<double>(x.at(r, k)) * static_cast<double>(y.at(c, k));
            }
            out.at(r, c) = static_cast<float>(acc);
        }
    }
    return out;
}

void softmax_rows_inplace(Mat& m) {
#pragma omp parallel for schedule(static)
    for (int r = 0; r < m.rows; ++r) {
        double mx = m.at(r, 0);
        for (int c = 1; c < m.cols; ++c) {
            mx = std::max(mx, static_cast<double>(m.at(r, c)));
        }
        std::vector<double> e(static_cast<std::size_t>(m.cols));
        double sum = 0.0;
        for (int c = 0; c < m.cols; ++c) {
            e[static_cast<std::size_t>(c)] = std::exp(static_cast<double>(m.at(r, c)) - mx);
            sum += e[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < m.cols; ++c) {
            m.at(r, c) = static_cast<float>(e[static_cast<std::size_t>(c)] / sum);
        }
    }
}

Mat attention_block(const Mat& q, const Mat& k, const Mat& v, Mat* probs) {
    if (q.cols != k.cols) {
        throw std::invalid_argument("attention_block: q/k feature widths disagree");
    }
    if (k.rows != v.rows) {
        throw std::invalid_argument("attention_block: k/v row counts disagree");
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols));
    Mat scores(q.rows, k.rows);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < q.rows; ++r) {
        for (int c = 0; c < k.rows; ++c) {
            double acc = 0.0;
            for (int j = 0; j < q.cols; ++j) {
                acc += static_cast<double>(q.at(r, j)) * static_cast<double>(k.at(c, j));
            }
            scores.at(r, c) = static_cast<float>(acc * inv_sqrt_d);
        }
    }
    softmax_rows_inplace(scores);
    if (probs != nullptr) {
        *probs = scores;
    }
    return matmul(scores, v);
}

}  // namespace latentforge
