#pragma once

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "defocus/rng.hpp"
#include "defocus/threading.hpp"

namespace defocus::nn {

namespace detail {
// Row-major GEMM: C = alpha * op(A) * op(B) + beta * C. Backed by BLAS.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc);
}  // namespace detail

template <class T>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<size_t>(n_) * c_ * h_ * w_, T(0)) {}

    size_t size() const { return v.size(); }
    size_t plane() const { return static_cast<size_t>(h) * w; }
    T* chan(int in, int ic) { return v.data() + (static_cast<size_t>(in) * c + ic) * plane(); }
    const T* chan(int in, int ic) const {
        return v.data() + (static_cast<size_t>(in) * c + ic) * plane();
    }
    bool same_shape(const Tensor4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
};

// Architecture element; the on-disk manifest is the list of these.
struct LayerSpec {
    enum class Kind { conv, batchnorm, relu, maxpool, dropout, globalmaxpool, dense };
    Kind kind;
    int in = 0, out = 0, k = 0;  // conv: in/out/kernel; bn: in=channels; dense: in/out
    double p = 0.0;              // dropout rate or batch-norm momentum

    static LayerSpec conv(int in, int out, int k) {
        return {Kind::conv, in, out, k, 0.0};
    }
    static LayerSpec batchnorm(int channels, double momentum) {
        return {Kind::batchnorm, channels, 0, 0, momentum};
    }
    static LayerSpec relu() { return {Kind::relu, 0, 0, 0, 0.0}; }
    static LayerSpec maxpool() { return {Kind::maxpool, 0, 0, 0, 0.0}; }
    static LayerSpec dropout(double rate) { return {Kind::dropout, 0, 0, 0, rate}; }
    static LayerSpec globalmaxpool() { return {Kind::globalmaxpool, 0, 0, 0, 0.0}; }
    static LayerSpec dense(int in, int out) { return {Kind::dense, in, out, 0, 0.0}; }
};

template <class T>
struct ParamView {
    std::vector<T>* value = nullptr;
    std::vector<T>* grad = nullptr;
};

template <class T>
class Layer {
public:
    virtual ~Layer() = default;
    // Takes the input by value so a layer can keep it (or reuse its storage)
    // without copying; train mode may consume entropy from rng.
    virtual Tensor4<T> forward(Tensor4<T> x, bool train, Xoshiro256& rng) = 0;
    virtual Tensor4<T> backward(Tensor4<T> gy) = 0;
    virtual std::vector<ParamView<T>> params() { return {}; }
    // Persisted arrays in file order (trainable params plus running stats).
    virtual std::vector<std::vector<T>*> state() { return {}; }
};

// ---------------------------------------------------------------------------

template <class T>
class Conv2d final : public Layer<T> {
public:
    Conv2d(int in_c, int out_c, int k) : in_c_(in_c), out_c_(out_c), k_(k) {
        if (k % 2 == 0) throw std::invalid_argument("conv kernel must be odd");
        weight_.assign(static_cast<size_t>(out_c) * in_c * k * k, T(0));
        bias_.assign(out_c, T(0));
        grad_weight_.assign(weight_.size(), T(0));
        grad_bias_.assign(bias_.size(), T(0));
    }

    Tensor4<T> forward(Tensor4<T> x, bool train, Xoshiro256&) override {
        if (x.c != in_c_) throw std::invalid_argument("conv: channel mismatch");
        const int n = x.n, h = x.h, w = x.w;
        const int hw = h * w, kk = k_ * k_;
        Tensor4<T> y(n, out_c_, h, w);
#pragma omp parallel num_threads(max_threads()) if (n > 1)
        {
            std::vector<T> col(static_cast<size_t>(in_c_) * kk * hw);
#pragma omp for schedule(static)
            for (int s = 0; s < n; ++s) {
                im2col(x, s, col.data());
                detail::gemm(false, false, out_c_, hw, in_c_ * kk, T(1), weight_.data(),
                             in_c_ * kk, col.data(), hw, T(0), y.chan(s, 0), hw);
                for (int oc = 0; oc < out_c_; ++oc) {
                    T* plane = y.chan(s, oc);
                    for (int i = 0; i < hw; ++i) plane[i] += bias_[oc];
                }
            }
        }
        if (train) input_ = std::move(x);  // eval-mode forward leaves the layer untouched
        return y;
    }

    Tensor4<T> backward(Tensor4<T> gy) override {
        const int n = input_.n, h = input_.h, w = input_.w;
        const int hw = h * w, kk = k_ * k_;
        Tensor4<T> gx(n, in_c_, h, w);
        const int threads = max_threads();
        std::vector<std::vector<T>> gw_parts(threads), gb_parts(threads);
#pragma omp parallel num_threads(threads)
        {
            const int tid = omp_get_thread_num();
            gw_parts[tid].assign(weight_.size(), T(0));
            gb_parts[tid].assign(bias_.size(), T(0));
            std::vector<T> col(static_cast<size_t>(in_c_) * kk * hw);
            std::vector<T> gcol(col.size());
#pragma omp for schedule(static)
            for (int s = 0; s < n; ++s) {
                im2col(input_, s, col.data());
                // dW += gy(oc,hw) * col(K,hw)^T
                detail::gemm(false, true, out_c_, in_c_ * kk, hw, T(1), gy.chan(s, 0), hw,
                             col.data(), hw, T(1), gw_parts[tid].data(), in_c_ * kk);
                for (int oc = 0; oc < out_c_; ++oc) {
                    const T* plane = gy.chan(s, oc);
                    T acc = T(0);
                    for (int i = 0; i < hw; ++i) acc += plane[i];
                    gb_parts[tid][oc] += acc;
                }
                // dcol = W^T(K,oc) * gy(oc,hw), then scatter back
                detail::gemm(true, false, in_c_ * kk, hw, out_c_, T(1), weight_.data(),
                             in_c_ * kk, gy.chan(s, 0), hw, T(0), gcol.data(), hw);
                col2im(gcol.data(), gx, s);
            }
        }
        for (int t = 0; t < threads; ++t) {
            if (gw_parts[t].empty()) continue;
            for (size_t i = 0; i < weight_.size(); ++i) grad_weight_[i] += gw_parts[t][i];
            for (size_t i = 0; i < bias_.size(); ++i) grad_bias_[i] += gb_parts[t][i];
        }
        input_ = Tensor4<T>();
        return gx;
    }

    std::vector<ParamView<T>> params() override {
        return {{&weight_, &grad_weight_}, {&bias_, &grad_bias_}};
    }
    std::vector<std::vector<T>*> state() override { return {&weight_, &bias_}; }

private:
    void im2col(const Tensor4<T>& x, int s, T* col) const {
        const int h = x.h, w = x.w, r = k_ / 2;
        const int hw = h * w;
        for (int ic = 0; ic < in_c_; ++ic) {
            const T* src = x.chan(s, ic);
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx) {
                    T* dst = col + (static_cast<size_t>(ic) * k_ * k_ + ky * k_ + kx) * hw;
                    const int dy = ky - r, dx = kx - r;
                    for (int y = 0; y < h; ++y) {
                        const int sy = y + dy;
                        T* drow = dst + static_cast<size_t>(y) * w;
                        if (sy < 0 || sy >= h) {
                            for (int xw = 0; xw < w; ++xw) drow[xw] = T(0);
                            continue;
                        }
                        const T* srow = src + static_cast<size_t>(sy) * w;
                        for (int xw = 0; xw < w; ++xw) {
                            const int sx = xw + dx;
                            drow[xw] = (sx < 0 || sx >= w) ? T(0) : srow[sx];
                        }
                    }
                }
            }
        }
    }

    void col2im(const T* col, Tensor4<T>& gx, int s) const {
        const int h = gx.h, w = gx.w, r = k_ / 2;
        const int hw = h * w;
        for (int ic = 0; ic < in_c_; ++ic) {
            T* dst = gx.chan(s, ic);
            for (int ky = 0; ky < k_; ++ky) {
                for (int kx = 0; kx < k_; ++kx) {
                    const T* src = col + (static_cast<size_t>(ic) * k_ * k_ + ky * k_ + kx) * hw;
                    const int dy = ky - r, dx = kx - r;
                    for (int y = 0; y < h; ++y) {
                        const int sy = y + dy;
                        if (sy < 0 || sy >= h) continue;
                        const T* srow = src + static_cast<size_t>(y) * w;
                        T* drow = dst + static_cast<size_t>(sy) * w;
                        for (int xw = 0; xw < w; ++xw) {
                            const int sx = xw + dx;
                            if (sx >= 0 && sx < w) drow[sx] += srow[xw];
                        }
                    }
                }
            }
        }
    }

    int in_c_, out_c_, k_;
    std::vector<T> weight_, bias_, grad_weight_, grad_bias_;
    Tensor4<T> input_;
};

// ---------------------------------------------------------------------------

template <class T>
class BatchNorm2d final : public Layer<T> {
public:
    BatchNorm2d(int channels, double momentum, double eps = 1e-3)
        : c_(channels), momentum_(momentum), eps_(eps) {
        gamma_.assign(channels, T(1));
        beta_.assign(channels, T(0));
        running_mean_.assign(channels, T(0));
        running_var_.assign(channels, T(1));
        grad_gamma_.assign(channels, T(0));
        grad_beta_.assign(channels, T(0));
    }

    Tensor4<T> forward(Tensor4<T> x, bool train, Xoshiro256&) override {
        if (x.c != c_) throw std::invalid_argument("batchnorm: channel mismatch");
        const size_t plane = x.plane();
        const int n = x.n;
        if (train) {
            mean_.assign(c_, 0.0);
            inv_std_.assign(c_, 0.0);
            input_ = x;  // kept for backward (x-hat recomputed on the fly)
            const double count = static_cast<double>(n) * plane;
#pragma omp parallel for schedule(static) num_threads(max_threads())
            for (int ch = 0; ch < c_; ++ch) {
                double sum = 0.0, sq = 0.0;
                for (int s = 0; s < n; ++s) {
                    const T* p = input_.chan(s, ch);
                    for (size_t i = 0; i < plane; ++i) {
                        sum += p[i];
                        sq += static_cast<double>(p[i]) * p[i];
                    }
                }
                const double mean = sum / count;
                double var = sq / count - mean * mean;
                if (var < 0) var = 0;  // cancellation guard
                mean_[ch] = mean;
                inv_std_[ch] = 1.0 / std::sqrt(var + eps_);
                running_mean_[ch] = static_cast<T>(momentum_ * running_mean_[ch] +
                                                   (1.0 - momentum_) * mean);
                running_var_[ch] =
                    static_cast<T>(momentum_ * running_var_[ch] + (1.0 - momentum_) * var);
                const double g = gamma_[ch], b = beta_[ch];
                for (int s = 0; s < n; ++s) {
                    T* p = x.chan(s, ch);
                    for (size_t i = 0; i < plane; ++i)
                        p[i] = static_cast<T>((p[i] - mean) * inv_std_[ch] * g + b);
                }
            }
            return x;
        }
#pragma omp parallel for schedule(static) num_threads(max_threads())
        for (int ch = 0; ch < c_; ++ch) {
            const double inv = 1.0 / std::sqrt(static_cast<double>(running_var_[ch]) + eps_);
            const double mean = running_mean_[ch];
            const double g = gamma_[ch], b = beta_[ch];
            for (int s = 0; s < n; ++s) {
                T* p = x.chan(s, ch);
                for (size_t i = 0; i < plane; ++i)
                    p[i] = static_cast<T>((p[i] - mean) * inv * g + b);
            }
        }
        return x;
    }

    Tensor4<T> backward(Tensor4<T> gy) override {
        const size_t plane = input_.plane();
        const int n = input_.n;
        const double count = static_cast<double>(n) * plane;
#pragma omp parallel for schedule(static) num_threads(max_threads())
        for (int ch = 0; ch < c_; ++ch) {
            const double mean = mean_[ch], inv = inv_std_[ch];
            double sum_g = 0.0, sum_gx = 0.0;
            for (int s = 0; s < n; ++s) {
                const T* g = gy.chan(s, ch);
                const T* x = input_.chan(s, ch);
                for (size_t i = 0; i < plane; ++i) {
                    const double xh = (x[i] - mean) * inv;
                    sum_g += g[i];
                    sum_gx += g[i] * xh;
                }
            }
            grad_gamma_[ch] += static_cast<T>(sum_gx);
            grad_beta_[ch] += static_cast<T>(sum_g);
            const double gam = gamma_[ch];
            for (int s = 0; s < n; ++s) {
                T* g = gy.chan(s, ch);
                const T* x = input_.chan(s, ch);
                for (size_t i = 0; i < plane; ++i) {
                    const double xh = (x[i] - mean) * inv;
                    g[i] = static_cast<T>(gam * inv *
                                          (g[i] - sum_g / count - xh * sum_gx / count));
                }
            }
        }
        input_ = Tensor4<T>();
        return gy;
    }

    std::vector<ParamView<T>> params() override {
        return {{&gamma_, &grad_gamma_}, {&beta_, &grad_beta_}};
    }
    std::vector<std::vector<T>*> state() override {
        return {&gamma_, &beta_, &running_mean_, &running_var_};
    }

private:
    int c_;
    double momentum_, eps_;
    std::vector<T> gamma_, beta_, running_mean_, running_var_, grad_gamma_, grad_beta_;
    std::vector<double> mean_, inv_std_;
    Tensor4<T> input_;
};

// ---------------------------------------------------------------------------

template <class T>
class ReLU final : public Layer<T> {
public:
    Tensor4<T> forward(Tensor4<T> x, bool train, Xoshiro256&) override {
        if (train) {
            mask_.assign(x.size(), 0);
            for (size_t i = 0; i < x.size(); ++i) {
                if (x.v[i] > T(0))
                    mask_[i] = 1;
                else
                    x.v[i] = T(0);
            }
        } else {
            for (auto& v : x.v)
                if (v < T(0)) v = T(0);
        }
        return x;
    }
    Tensor4<T> backward(Tensor4<T> gy) override {
        for (size_t i = 0; i < gy.size(); ++i)
            if (!mask_[i]) gy.v[i] = T(0);
        return gy;
    }

private:
    std::vector<uint8_t> mask_;
};

// 2x2 max pooling, stride 2, valid (odd trailing row/column dropped).
template <class T>
class MaxPool2d final : public Layer<T> {
public:
    Tensor4<T> forward(Tensor4<T> x, bool train, Xoshiro256&) override {
        const int oh = x.h / 2, ow = x.w / 2;
        Tensor4<T> y(x.n, x.c, oh, ow);
        std::vector<int> argmax;
        if (train) {
            in_n_ = x.n; in_c_ = x.c; in_h_ = x.h; in_w_ = x.w;
            argmax.assign(y.size(), 0);
        }
        for (int s = 0; s < x.n; ++s)
            for (int ch = 0; ch < x.c; ++ch) {
                const T* src = x.chan(s, ch);
                T* dst = y.chan(s, ch);
                for (int yy = 0; yy < oh; ++yy)
                    for (int xx = 0; xx < ow; ++xx) {
                        int best = (2 * yy) * x.w + 2 * xx;
                        T bv = src[best];
                        const int cand[3] = {(2 * yy) * x.w + 2 * xx + 1,
                                             (2 * yy + 1) * x.w + 2 * xx,
                                             (2 * yy + 1) * x.w + 2 * xx + 1};
                        for (int ci : cand)
                            if (src[ci] > bv) {
                                bv = src[ci];
                                best = ci;
                            }
                        dst[yy * ow + xx] = bv;
                        if (train)
                            argmax[(static_cast<size_t>(s) * x.c + ch) * oh * ow + yy * ow + xx] =
                                best;
                    }
            }
        if (train) argmax_ = std::move(argmax);
        return y;
    }

    Tensor4<T> backward(Tensor4<T> gy) override {
        Tensor4<T> gx(in_n_, in_c_, in_h_, in_w_);
        const size_t oplane = gy.plane();
        for (int s = 0; s < gy.n; ++s)
            for (int ch = 0; ch < gy.c; ++ch) {
                const T* g = gy.chan(s, ch);
                T* dst = gx.chan(s, ch);
                const int* arg = argmax_.data() + (static_cast<size_t>(s) * gy.c + ch) * oplane;
                for (size_t i = 0; i < oplane; ++i) dst[arg[i]] += g[i];
            }
        return gx;
    }

private:
    int in_n_ = 0, in_c_ = 0, in_h_ = 0, in_w_ = 0;
    std::vector<int> argmax_;
};

// Inverted dropout; the mask comes from the model RNG so training runs are
// replayable.
template <class T>
class Dropout final : public Layer<T> {
public:
    explicit Dropout(double rate) : rate_(rate) {
        if (rate < 0 || rate >= 1) throw std::invalid_argument("dropout rate outside [0,1)");
    }

    Tensor4<T> forward(Tensor4<T> x, bool train, Xoshiro256& rng) override {
        if (!train) return x;  // eval-mode forward must not touch layer state
        if (rate_ == 0.0) {
            active_ = false;
            return x;
        }
        active_ = true;
        keep_.assign(x.size(), 0);
        const T scale = T(1.0 / (1.0 - rate_));
        for (size_t i = 0; i < x.size(); ++i) keep_[i] = rng.uniform() >= rate_ ? 1 : 0;
        for (size_t i = 0; i < x.size(); ++i) x.v[i] = keep_[i] ? x.v[i] * scale : T(0);
        return x;
    }

    Tensor4<T> backward(Tensor4<T> gy) override {
        if (!active_) return gy;
        const T scale = T(1.0 / (1.0 - rate_));
        for (size_t i = 0; i < gy.size(); ++i) gy.v[i] = keep_[i] ? gy.v[i] * scale : T(0);
        return gy;
    }

private:
    double rate_;
    bool active_ = false;
    std::vector<uint8_t> keep_;
};

template <class T>
class GlobalMaxPool final : public Layer<T> {
public:
    Tensor4<T> forward(Tensor4<T> x, bool train, Xoshiro256&) override {
        Tensor4<T> y(x.n, x.c, 1, 1);
        std::vector<int> argmax;
        if (train) {
            in_h_ = x.h; in_w_ = x.w;
            argmax.assign(static_cast<size_t>(x.n) * x.c, 0);
        }
        for (int s = 0; s < x.n; ++s)
            for (int ch = 0; ch < x.c; ++ch) {
                const T* src = x.chan(s, ch);
                int best = 0;
                for (size_t i = 1; i < x.plane(); ++i)
                    if (src[i] > src[best]) best = static_cast<int>(i);
                y.v[static_cast<size_t>(s) * x.c + ch] = src[best];
                if (train) argmax[static_cast<size_t>(s) * x.c + ch] = best;
            }
        if (train) argmax_ = std::move(argmax);
        return y;
    }

    Tensor4<T> backward(Tensor4<T> gy) override {
        Tensor4<T> gx(gy.n, gy.c, in_h_, in_w_);
        for (int s = 0; s < gy.n; ++s)
            for (int ch = 0; ch < gy.c; ++ch)
                gx.chan(s, ch)[argmax_[static_cast<size_t>(s) * gy.c + ch]] =
                    gy.v[static_cast<size_t>(s) * gy.c + ch];
        return gx;
    }

private:
    int in_h_ = 0, in_w_ = 0;
    std::vector<int> argmax_;
};

template <class T>
class Dense final : public Layer<T> {
public:
    Dense(int in, int out) : in_(in), out_(out) {
        weight_.assign(static_cast<size_t>(out) * in, T(0));
        bias_.assign(out, T(0));
        grad_weight_.assign(weight_.size(), T(0));
        grad_bias_.assign(bias_.size(), T(0));
    }

    Tensor4<T> forward(Tensor4<T> x, bool train, Xoshiro256&) override {
        if (x.c * x.h * x.w != in_) throw std::invalid_argument("dense: input size mismatch");
        Tensor4<T> y(x.n, out_, 1, 1);
        // y(n,out) = x(n,in) * W(out,in)^T
        detail::gemm(false, true, x.n, out_, in_, T(1), x.v.data(), in_, weight_.data(), in_,
                     T(0), y.v.data(), out_);
        for (int s = 0; s < y.n; ++s)
            for (int o = 0; o < out_; ++o) y.v[static_cast<size_t>(s) * out_ + o] += bias_[o];
        if (train) input_ = std::move(x);
        return y;
    }

    Tensor4<T> backward(Tensor4<T> gy) override {
        // dW(out,in) += gy(n,out)^T * x(n,in)
        detail::gemm(true, false, out_, in_, input_.n, T(1), gy.v.data(), out_, input_.v.data(),
                     in_, T(1), grad_weight_.data(), in_);
        for (int s = 0; s < gy.n; ++s)
            for (int o = 0; o < out_; ++o)
                grad_bias_[o] += gy.v[static_cast<size_t>(s) * out_ + o];
        Tensor4<T> gx(input_.n, input_.c, input_.h, input_.w);
        // dx(n,in) = gy(n,out) * W(out,in)
        detail::gemm(false, false, input_.n, in_, out_, T(1), gy.v.data(), out_, weight_.data(),
                     in_, T(0), gx.v.data(), in_);
        input_ = Tensor4<T>();
        return gx;
    }

    std::vector<ParamView<T>> params() override {
        return {{&weight_, &grad_weight_}, {&bias_, &grad_bias_}};
    }
    std::vector<std::vector<T>*> state() override { return {&weight_, &bias_}; }

private:
    int in_, out_;
    std::vector<T> weight_, bias_, grad_weight_, grad_bias_;
    Tensor4<T> input_;
};

// ---------------------------------------------------------------------------

template <class T>
class Model {
public:
    std::vector<LayerSpec> specs;
    std::vector<std::unique_ptr<Layer<T>>> layers;
    Xoshiro256 rng{0};

    Tensor4<T> forward(Tensor4<T> x, bool train) {
        for (auto& layer : layers) x = layer->forward(std::move(x), train, rng);
        return x;
    }

    Tensor4<T> backward(Tensor4<T> gy) {
        for (auto it = layers.rbegin(); it != layers.rend(); ++it)
            gy = (*it)->backward(std::move(gy));
        return gy;
    }

    std::vector<ParamView<T>> params() {
        std::vector<ParamView<T>> all;
        for (auto& layer : layers)
            for (auto& p : layer->params()) all.push_back(p);
        return all;
    }

    size_t param_count() {
        size_t n = 0;
        for (auto& p : params()) n += p.value->size();
        return n;
    }

    void zero_grads() {
        for (auto& p : params()) std::fill(p.grad->begin(), p.grad->end(), T(0));
    }
};

// Builds layers from specs with Glorot-uniform conv/dense weights; every
// random draw comes from streams derived from `seed`.
template <class T>
Model<T> build_model(const std::vector<LayerSpec>& specs, uint64_t seed) {
    Model<T> model;
    model.specs = specs;
    model.rng = Xoshiro256(derive_seed(seed, 0xD120));
    int index = 0;
    for (const auto& spec : specs) {
        Xoshiro256 init(derive_seed(seed, 0x1217, static_cast<uint64_t>(index)));
        switch (spec.kind) {
            case LayerSpec::Kind::conv: {
                auto layer = std::make_unique<Conv2d<T>>(spec.in, spec.out, spec.k);
                auto views = layer->params();
                const double fan_in = static_cast<double>(spec.in) * spec.k * spec.k;
                const double fan_out = static_cast<double>(spec.out) * spec.k * spec.k;
                const double limit = std::sqrt(6.0 / (fan_in + fan_out));
                for (auto& v : *views[0].value)
                    v = static_cast<T>((init.uniform() * 2.0 - 1.0) * limit);
                model.layers.push_back(std::move(layer));
                break;
            }
            case LayerSpec::Kind::batchnorm:
                model.layers.push_back(std::make_unique<BatchNorm2d<T>>(spec.in, spec.p));
                break;
            case LayerSpec::Kind::relu:
                model.layers.push_back(std::make_unique<ReLU<T>>());
                break;
            case LayerSpec::Kind::maxpool:
                model.layers.push_back(std::make_unique<MaxPool2d<T>>());
                break;
            case LayerSpec::Kind::dropout:
                model.layers.push_back(std::make_unique<Dropout<T>>(spec.p));
                break;
            case LayerSpec::Kind::globalmaxpool:
                model.layers.push_back(std::make_unique<GlobalMaxPool<T>>());
                break;
            case LayerSpec::Kind::dense: {
                auto layer = std::make_unique<Dense<T>>(spec.in, spec.out);
                auto views = layer->params();
                const double limit = std::sqrt(6.0 / (spec.in + spec.out));
                for (auto& v : *views[0].value)
                    v = static_cast<T>((init.uniform() * 2.0 - 1.0) * limit);
                model.layers.push_back(std::move(layer));
                break;
            }
        }
        ++index;
    }
    return model;
}

// Mean cross-entropy over the batch; numerically stabilized softmax.
template <class T>
double cross_entropy(const Tensor4<T>& logits, const std::vector<int>& labels) {
    if (static_cast<size_t>(logits.n) != labels.size())
        throw std::invalid_argument("cross_entropy: batch size mismatch");
    const int k = logits.c;
    double total = 0.0;
    for (int s = 0; s < logits.n; ++s) {
        if (labels[s] < 0 || labels[s] >= k)
            throw std::invalid_argument("cross_entropy: label out of range");
        const T* row = logits.v.data() + static_cast<size_t>(s) * k;
        double m = row[0];
        for (int i = 1; i < k; ++i) m = std::max(m, static_cast<double>(row[i]));
        double lse = 0.0;
        for (int i = 0; i < k; ++i) lse += std::exp(static_cast<double>(row[i]) - m);
        total += m + std::log(lse) - static_cast<double>(row[labels[s]]);
    }
    return total / logits.n;
}

// Loss plus dLoss/dLogits in one pass.
template <class T>
double cross_entropy_backward(const Tensor4<T>& logits, const std::vector<int>& labels,
                              Tensor4<T>& grad) {
    const int k = logits.c;
    grad = Tensor4<T>(logits.n, k, 1, 1);
    double total = 0.0;
    for (int s = 0; s < logits.n; ++s) {
        if (labels[s] < 0 || labels[s] >= k)
            throw std::invalid_argument("cross_entropy: label out of range");
        const T* row = logits.v.data() + static_cast<size_t>(s) * k;
        T* grow = grad.v.data() + static_cast<size_t>(s) * k;
        double m = row[0];
        for (int i = 1; i < k; ++i) m = std::max(m, static_cast<double>(row[i]));
        double lse = 0.0;
        for (int i = 0; i < k; ++i) lse += std::exp(static_cast<double>(row[i]) - m);
        total += m + std::log(lse) - static_cast<double>(row[labels[s]]);
        for (int i = 0; i < k; ++i) {
            const double p = std::exp(static_cast<double>(row[i]) - m) / lse;
            grow[i] = static_cast<T>((p - (i == labels[s] ? 1.0 : 0.0)) / logits.n);
        }
    }
    return total / logits.n;
}

// Softmax probabilities for one sample row.
template <class T>
std::vector<double> softmax_row(const T* row, int k) {
    double m = row[0];
    for (int i = 1; i < k; ++i) m = std::max(m, static_cast<double>(row[i]));
    double lse = 0.0;
    std::vector<double> p(k);
    for (int i = 0; i < k; ++i) {
        p[i] = std::exp(static_cast<double>(row[i]) - m);
        lse += p[i];
    }
    for (double& v : p) v /= lse;
    return p;
}

// Adam with inverse-time learning-rate decay: lr_t = lr / (1 + decay * step).
template <class T>
class Adam {
public:
    Adam(double lr, double decay, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-7)
        : lr_(lr), decay_(decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(Model<T>& model, long step_index) {
        auto views = model.params();
        if (m_.empty()) {
            m_.resize(views.size());
            v_.resize(views.size());
            for (size_t i = 0; i < views.size(); ++i) {
                m_[i].assign(views[i].value->size(), 0.0);
                v_[i].assign(views[i].value->size(), 0.0);
            }
        }
        ++t_;
        const double lr_t = lr_ / (1.0 + decay_ * static_cast<double>(step_index));
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (size_t i = 0; i < views.size(); ++i) {
            auto& value = *views[i].value;
            auto& grad = *views[i].grad;
            auto& m = m_[i];
            auto& v = v_[i];
            const long n = static_cast<long>(value.size());
#pragma omp parallel for schedule(static) num_threads(max_threads()) if (n > 16384)
            for (long j = 0; j < n; ++j) {
                const double g = grad[j];
                m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
                v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                value[j] = static_cast<T>(value[j] - lr_t * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

private:
    double lr_, decay_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace defocus::nn
