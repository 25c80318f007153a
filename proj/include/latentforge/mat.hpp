#pragma once

#include <cstddef>
#include <vector>

namespace latentforge {

// Small dense row-major float matrix for the attention blocks. Products
// accumulate in double so the 1e-6 injection-exactness contract has margin.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<float> a;

    Mat() = default;
    Mat(int rows, int cols, float fill = 0.0f);

    float& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    float at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// x (m x k) times y (k x n); OpenMP over output rows.
Mat matmul(const Mat& x, const Mat& y);

// x (m x k) times y^T (n x k) -> m x n.
Mat matmul_nt(const Mat& x, const Mat& y);

// Row-wise softmax with max subtraction, computed in double.
void softmax_rows_inplace(Mat& m);

// softmax(q k^T / sqrt(d)) v with d = q.cols. Returns the attention output;
// if `probs` is non-null it receives the post-softmax score matrix.
Mat attention_block(const Mat& q, const Mat& k, const Mat& v, Mat* probs = nullptr);

}  // namespace latentforge
