#include "ganlens/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "ganlens/errors.hpp"

namespace ganlens::nn {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXf>;
using CMapVec = Eigen::Map<const Eigen::VectorXf>;

int conv_out_dim(int in, int k, int s, int p) { return (in + 2 * p - k) / s + 1; }

// gathers conv patches: dst[(c*k+ky)*k+kx, oy*OW+ox] = src[c, oy*s-p+ky, ox*s-p+kx]
void im2col(const float* src, int C, int H, int W, int k, int s, int p, int OH, int OW, float* dst) {
    for (int c = 0; c < C; ++c) {
        const float* plane = src + static_cast<std::size_t>(c) * H * W;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                float* row = dst + (static_cast<std::size_t>(c) * k * k + ky * k + kx) *
                                       static_cast<std::size_t>(OH) * OW;
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * s - p + ky;
                    float* out_row = row + static_cast<std::size_t>(oy) * OW;
                    if (iy < 0 || iy >= H) {
                        std::memset(out_row, 0, sizeof(float) * static_cast<std::size_t>(OW));
                        continue;
                    }
                    const float* in_row = plane + static_cast<std::size_t>(iy) * W;
                    if (s == 1) {
                        const int x0 = std::max(0, p - kx);
                        const int x1 = std::min(OW, W - kx + p);
                        for (int ox = 0; ox < x0; ++ox) out_row[ox] = 0.0f;
                        if (x1 > x0)
                            std::memcpy(out_row + x0, in_row + x0 - p + kx,
                                        sizeof(float) * static_cast<std::size_t>(x1 - x0));
                        for (int ox = std::max(x0, x1); ox < OW; ++ox) out_row[ox] = 0.0f;
                    } else {
                        for (int ox = 0; ox < OW; ++ox) {
                            const int ix = ox * s - p + kx;
                            out_row[ox] = (ix >= 0 && ix < W) ? in_row[ix] : 0.0f;
                        }
                    }
                }
            }
        }
    }
}

// scatter-add inverse of im2col
void col2im_add(const float* cols, int C, int H, int W, int k, int s, int p, int OH, int OW, float* dst) {
    for (int c = 0; c < C; ++c) {
        float* plane = dst + static_cast<std::size_t>(c) * H * W;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const float* row = cols + (static_cast<std::size_t>(c) * k * k + ky * k + kx) *
                                              static_cast<std::size_t>(OH) * OW;
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * s - p + ky;
                    if (iy < 0 || iy >= H) continue;
                    const float* in_row = row + static_cast<std::size_t>(oy) * OW;
                    float* out_row = plane + static_cast<std::size_t>(iy) * W;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int ix = ox * s - p + kx;
                        if (ix >= 0 && ix < W) out_row[ix] += in_row[ox];
                    }
                }
            }
        }
    }
}

void init_normal(Tensor& t, Rng& rng, float std) {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.normalf() * std;
}

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

void write_str(std::ostream& os, const std::string& s) {
    write_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string read_str(std::istream& is) {
    const std::uint32_t n = read_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    return s;
}

void write_tensor(std::ostream& os, const Tensor& t) {
    write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) write_u32(os, static_cast<std::uint32_t>(t.dim(i)));
    os.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

void read_tensor_into(std::istream& is, Tensor& t) {
    const std::uint32_t rank = read_u32(is);
    std::vector<int> dims(rank);
    for (auto& d : dims) d = static_cast<int>(read_u32(is));
    if (dims != t.shape())
        throw FormatError("checkpoint tensor shape mismatch: expected " + t.shape_str());
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!is) throw FormatError("checkpoint truncated");
}

}  // namespace

// ---------------------------------------------------------------- Dense

Dense::Dense(int in_dim, int out_dim, Rng& rng, float init_std) : in_dim_(in_dim), out_dim_(out_dim) {
    w_.value = Tensor({out_dim, in_dim});
    w_.grad = Tensor({out_dim, in_dim});
    b_.value = Tensor({out_dim});
    b_.grad = Tensor({out_dim});
    init_normal(w_.value, rng, init_std);
}

Tensor Dense::forward(const Tensor& x, bool) {
    if (x.rank() != 2 || x.dim(1) != in_dim_)
        throw ShapeError("dense: expected [N," + std::to_string(in_dim_) + "], got " + x.shape_str());
    x_ = x;
    const int n = x.dim(0);
    Tensor y({n, out_dim_});
    CMapMat xm(x.data(), n, in_dim_);
    CMapMat wm(w_.value.data(), out_dim_, in_dim_);
    MapMat ym(y.data(), n, out_dim_);
    ym.noalias() = xm * wm.transpose();
    ym.rowwise() += CMapVec(b_.value.data(), out_dim_).transpose();
    return y;
}

Tensor Dense::backward(const Tensor& gout) {
    const int n = gout.dim(0);
    CMapMat gm(gout.data(), n, out_dim_);
    CMapMat xm(x_.data(), n, in_dim_);
    CMapMat wm(w_.value.data(), out_dim_, in_dim_);
    MapMat gw(w_.grad.data(), out_dim_, in_dim_);
    MapVec gb(b_.grad.data(), out_dim_);
    gw.noalias() += gm.transpose() * xm;
    gb.noalias() += gm.colwise().sum().transpose();
    Tensor gx({n, in_dim_});
    MapMat gxm(gx.data(), n, in_dim_);
    gxm.noalias() = gm * wm;
    return gx;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng, float init_std)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(pad) {
    w_.value = Tensor({out_ch, in_ch * kernel * kernel});
    w_.grad = Tensor({out_ch, in_ch * kernel * kernel});
    b_.value = Tensor({out_ch});
    b_.grad = Tensor({out_ch});
    init_normal(w_.value, rng, init_std);
}

Tensor Conv2d::forward(const Tensor& x, bool) {
    if (x.rank() != 4 || x.dim(1) != in_ch_)
        throw ShapeError("conv: expected [N," + std::to_string(in_ch_) + ",H,W], got " + x.shape_str());
    x_ = x;
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = conv_out_dim(h, kernel_, stride_, pad_), ow = conv_out_dim(w, kernel_, stride_, pad_);
    const int kdim = in_ch_ * kernel_ * kernel_;
    Tensor y({n, out_ch_, oh, ow});
    std::vector<float> cols(static_cast<std::size_t>(kdim) * oh * ow);
    CMapMat wm(w_.value.data(), out_ch_, kdim);
    CMapVec bv(b_.value.data(), out_ch_);
    for (int i = 0; i < n; ++i) {
        im2col(x.data() + static_cast<std::size_t>(i) * in_ch_ * h * w, in_ch_, h, w, kernel_, stride_, pad_,
               oh, ow, cols.data());
        CMapMat cm(cols.data(), kdim, oh * ow);
        MapMat ym(y.data() + static_cast<std::size_t>(i) * out_ch_ * oh * ow, out_ch_, oh * ow);
        ym.noalias() = wm * cm;
        ym.colwise() += bv;
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& gout) {
    const int n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
    const int oh = gout.dim(2), ow = gout.dim(3);
    const int kdim = in_ch_ * kernel_ * kernel_;
    Tensor gx({n, in_ch_, h, w});
    std::vector<float> cols(static_cast<std::size_t>(kdim) * oh * ow);
    std::vector<float> gcols(cols.size());
    CMapMat wm(w_.value.data(), out_ch_, kdim);
    MapMat gw(w_.grad.data(), out_ch_, kdim);
    MapVec gb(b_.grad.data(), out_ch_);
    for (int i = 0; i < n; ++i) {
        CMapMat gm(gout.data() + static_cast<std::size_t>(i) * out_ch_ * oh * ow, out_ch_, oh * ow);
        gb.noalias() += gm.rowwise().sum();
        im2col(x_.data() + static_cast<std::size_t>(i) * in_ch_ * h * w, in_ch_, h, w, kernel_, stride_,
               pad_, oh, ow, cols.data());
        CMapMat cm(cols.data(), kdim, oh * ow);
        gw.noalias() += gm * cm.transpose();
        MapMat gc(gcols.data(), kdim, oh * ow);
        gc.noalias() = wm.transpose() * gm;
        col2im_add(gcols.data(), in_ch_, h, w, kernel_, stride_, pad_, oh, ow,
                   gx.data() + static_cast<std::size_t>(i) * in_ch_ * h * w);
    }
    return gx;
}

// ------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng,
                                 float init_std)
    : in_ch_(in_ch), out_ch_(out_ch), kernel_(kernel), stride_(stride), pad_(pad) {
    w_.value = Tensor({in_ch, out_ch * kernel * kernel});
    w_.grad = Tensor({in_ch, out_ch * kernel * kernel});
    b_.value = Tensor({out_ch});
    b_.grad = Tensor({out_ch});
    init_normal(w_.value, rng, init_std);
}

Tensor ConvTranspose2d::forward(const Tensor& x, bool) {
    if (x.rank() != 4 || x.dim(1) != in_ch_)
        throw ShapeError("tconv: expected [N," + std::to_string(in_ch_) + ",H,W], got " + x.shape_str());
    x_ = x;
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const int oh = (h - 1) * stride_ - 2 * pad_ + kernel_;
    const int ow = (w - 1) * stride_ - 2 * pad_ + kernel_;
    const int kdim = out_ch_ * kernel_ * kernel_;
    Tensor y({n, out_ch_, oh, ow});
    std::vector<float> cols(static_cast<std::size_t>(kdim) * h * w);
    CMapMat wm(w_.value.data(), in_ch_, kdim);
    for (int i = 0; i < n; ++i) {
        CMapMat xm(x.data() + static_cast<std::size_t>(i) * in_ch_ * h * w, in_ch_, h * w);
        MapMat cm(cols.data(), kdim, h * w);
        cm.noalias() = wm.transpose() * xm;
        float* out = y.data() + static_cast<std::size_t>(i) * out_ch_ * oh * ow;
        col2im_add(cols.data(), out_ch_, oh, ow, kernel_, stride_, pad_, h, w, out);
        MapMat ym(out, out_ch_, oh * ow);
        ym.colwise() += CMapVec(b_.value.data(), out_ch_);
    }
    return y;
}

Tensor ConvTranspose2d::backward(const Tensor& gout) {
    const int n = x_.dim(0), h = x_.dim(2), w = x_.dim(3);
    const int oh = gout.dim(2), ow = gout.dim(3);
    const int kdim = out_ch_ * kernel_ * kernel_;
    Tensor gx({n, in_ch_, h, w});
    std::vector<float> gcols(static_cast<std::size_t>(kdim) * h * w);
    CMapMat wm(w_.value.data(), in_ch_, kdim);
    MapMat gw(w_.grad.data(), in_ch_, kdim);
    MapVec gb(b_.grad.data(), out_ch_);
    for (int i = 0; i < n; ++i) {
        const float* gptr = gout.data() + static_cast<std::size_t>(i) * out_ch_ * oh * ow;
        CMapMat gm(gptr, out_ch_, oh * ow);
        gb.noalias() += gm.rowwise().sum();
        im2col(gptr, out_ch_, oh, ow, kernel_, stride_, pad_, h, w, gcols.data());
        CMapMat gc(gcols.data(), kdim, h * w);
        CMapMat xm(x_.data() + static_cast<std::size_t>(i) * in_ch_ * h * w, in_ch_, h * w);
        gw.noalias() += xm * gc.transpose();
        MapMat gxm(gx.data() + static_cast<std::size_t>(i) * in_ch_ * h * w, in_ch_, h * w);
        gxm.noalias() = wm * gc;
    }
    return gx;
}

// ------------------------------------------------------------ BatchNorm2d

BatchNorm2d::BatchNorm2d(int channels, float momentum, float eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
    gamma_.value = Tensor::full({channels}, 1.0f);
    gamma_.grad = Tensor({channels});
    beta_.value = Tensor({channels});
    beta_.grad = Tensor({channels});
    running_mean_ = Tensor({channels});
    running_var_ = Tensor::full({channels}, 1.0f);
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
    if (x.rank() != 4 || x.dim(1) != channels_) throw ShapeError("batchnorm: bad input " + x.shape_str());
    const int n = x.dim(0), h = x.dim(2), w = x.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t stride = static_cast<std::size_t>(channels_) * plane;
    Tensor y(x.shape());
    xhat_ = Tensor(x.shape());
    invstd_ = Tensor({channels_});
    const double count = static_cast<double>(n) * plane;
    for (int c = 0; c < channels_; ++c) {
        double mean, var;
        if (train) {
            double sum = 0.0, sq = 0.0;
            for (int i = 0; i < n; ++i) {
                const float* p = x.data() + i * stride + c * plane;
                for (std::size_t k = 0; k < plane; ++k) {
                    sum += p[k];
                    sq += static_cast<double>(p[k]) * p[k];
                }
            }
            mean = sum / count;
            var = std::max(0.0, sq / count - mean * mean);
            running_mean_[c] = (1 - momentum_) * running_mean_[c] + momentum_ * static_cast<float>(mean);
            running_var_[c] = (1 - momentum_) * running_var_[c] + momentum_ * static_cast<float>(var);
        } else {
            mean = running_mean_[c];
            var = running_var_[c];
        }
        const float istd = 1.0f / std::sqrt(static_cast<float>(var) + eps_);
        invstd_[c] = istd;
        const float g = gamma_.value[c], b = beta_.value[c], mu = static_cast<float>(mean);
        for (int i = 0; i < n; ++i) {
            const float* p = x.data() + i * stride + c * plane;
            float* xh = xhat_.data() + i * stride + c * plane;
            float* yp = y.data() + i * stride + c * plane;
            for (std::size_t k = 0; k < plane; ++k) {
                xh[k] = (p[k] - mu) * istd;
                yp[k] = g * xh[k] + b;
            }
        }
    }
    return y;
}

Tensor BatchNorm2d::backward(const Tensor& gout) {
    const int n = gout.dim(0), h = gout.dim(2), w = gout.dim(3);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t stride = static_cast<std::size_t>(channels_) * plane;
    const double count = static_cast<double>(n) * plane;
    Tensor gx(gout.shape());
    for (int c = 0; c < channels_; ++c) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int i = 0; i < n; ++i) {
            const float* gp = gout.data() + i * stride + c * plane;
            const float* xh = xhat_.data() + i * stride + c * plane;
            for (std::size_t k = 0; k < plane; ++k) {
                sum_g += gp[k];
                sum_gx += static_cast<double>(gp[k]) * xh[k];
            }
        }
        gamma_.grad[c] += static_cast<float>(sum_gx);
        beta_.grad[c] += static_cast<float>(sum_g);
        const float g = gamma_.value[c], istd = invstd_[c];
        const float mean_g = static_cast<float>(sum_g / count);
        const float mean_gx = static_cast<float>(sum_gx / count);
        for (int i = 0; i < n; ++i) {
            const float* gp = gout.data() + i * stride + c * plane;
            const float* xh = xhat_.data() + i * stride + c * plane;
            float* out = gx.data() + i * stride + c * plane;
            for (std::size_t k = 0; k < plane; ++k)
                out[k] = g * istd * (gp[k] - mean_g - xh[k] * mean_gx);
        }
    }
    return gx;
}

// ------------------------------------------------------------ activations

Tensor ReLU::forward(const Tensor& x, bool) {
    x_ = x;
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
    return y;
}

Tensor ReLU::backward(const Tensor& gout) {
    Tensor gx(gout.shape());
    for (std::size_t i = 0; i < gout.numel(); ++i) gx[i] = x_[i] > 0.0f ? gout[i] : 0.0f;
    return gx;
}

Tensor LeakyReLU::forward(const Tensor& x, bool) {
    x_ = x;
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > 0.0f ? x[i] : slope_ * x[i];
    return y;
}

Tensor LeakyReLU::backward(const Tensor& gout) {
    Tensor gx(gout.shape());
    for (std::size_t i = 0; i < gout.numel(); ++i) gx[i] = x_[i] > 0.0f ? gout[i] : slope_ * gout[i];
    return gx;
}

Tensor Tanh::forward(const Tensor& x, bool) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) y[i] = std::tanh(x[i]);
    y_ = y;
    return y;
}

Tensor Tanh::backward(const Tensor& gout) {
    Tensor gx(gout.shape());
    for (std::size_t i = 0; i < gout.numel(); ++i) gx[i] = gout[i] * (1.0f - y_[i] * y_[i]);
    return gx;
}

// -------------------------------------------------------------- MaxPool2d

Tensor MaxPool2d::forward(const Tensor& x, bool) {
    if (x.rank() != 4) throw ShapeError("maxpool: bad input " + x.shape_str());
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h % 2 || w % 2) throw ShapeError("maxpool: odd spatial size");
    in_shape_ = x.shape();
    const int oh = h / 2, ow = w / 2;
    Tensor y({n, c, oh, ow});
    argmax_.resize(y.numel());
    std::size_t oi = 0;
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
            const float* plane = x.data() + (static_cast<std::size_t>(i) * c + ch) * h * w;
            const std::size_t base = (static_cast<std::size_t>(i) * c + ch) * h * w;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox, ++oi) {
                    const int iy = oy * 2, ix = ox * 2;
                    std::size_t best = static_cast<std::size_t>(iy) * w + ix;
                    float bv = plane[best];
                    const std::size_t cands[3] = {best + 1, best + w, best + w + 1};
                    for (std::size_t cand : cands)
                        if (plane[cand] > bv) {
                            bv = plane[cand];
                            best = cand;
                        }
                    y[oi] = bv;
                    argmax_[oi] = base + best;
                }
        }
    return y;
}

Tensor MaxPool2d::backward(const Tensor& gout) {
    Tensor gx(in_shape_);
    for (std::size_t i = 0; i < gout.numel(); ++i) gx[argmax_[i]] += gout[i];
    return gx;
}

// ---------------------------------------------------------------- Reshape

Tensor Reshape::forward(const Tensor& x, bool) {
    in_shape_ = x.shape();
    std::vector<int> shape{x.dim(0)};
    shape.insert(shape.end(), dims_.begin(), dims_.end());
    return x.reshaped(std::move(shape));
}

Tensor Reshape::backward(const Tensor& gout) { return gout.reshaped(in_shape_); }

// ---------------------------------------------------------------- Network

Tensor Network::forward(const Tensor& x, bool train) {
    Tensor cur = x;
    for (auto& l : layers_) cur = l->forward(cur, train);
    return cur;
}

Tensor Network::forward_collect(const Tensor& x, bool train, std::vector<Tensor>* taps) {
    Tensor cur = x;
    taps->clear();
    for (auto& l : layers_) {
        cur = l->forward(cur, train);
        taps->push_back(cur);
    }
    return cur;
}

Tensor Network::backward(const Tensor& grad_out, int until) {
    Tensor g = grad_out;
    for (int i = static_cast<int>(layers_.size()) - 1; i >= until; --i) g = layers_[static_cast<std::size_t>(i)]->backward(g);
    return g;
}

std::vector<ParamTensor*> Network::params() {
    std::vector<ParamTensor*> out;
    for (auto& l : layers_)
        for (auto* p : l->params()) out.push_back(p);
    return out;
}

void Network::zero_grad() {
    for (auto* p : params()) p->zero_grad();
}

int Network::find_layer(const std::string& name) const {
    for (std::size_t i = 0; i < layers_.size(); ++i)
        if (layers_[i]->name == name) return static_cast<int>(i);
    return -1;
}

std::size_t Network::param_count() {
    std::size_t n = 0;
    for (auto* p : params()) n += p->value.numel();
    return n;
}

void Network::save(std::ostream& os) const {
    os.write("GLNT", 4);
    write_u32(os, 1);
    write_u32(os, static_cast<std::uint32_t>(layers_.size()));
    for (const auto& l : layers_) {
        write_str(os, l->kind());
        write_str(os, l->name);
        auto* mut = const_cast<Layer*>(l.get());
        const auto ps = mut->params();
        write_u32(os, static_cast<std::uint32_t>(ps.size()));
        for (auto* p : ps) write_tensor(os, p->value);
        const auto bs = mut->buffers();
        write_u32(os, static_cast<std::uint32_t>(bs.size()));
        for (auto* b : bs) write_tensor(os, *b);
    }
}

void Network::load(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "GLNT", 4) != 0) throw FormatError("not a ganlens network blob");
    if (read_u32(is) != 1) throw FormatError("unsupported network blob version");
    const std::uint32_t n = read_u32(is);
    if (n != layers_.size()) throw FormatError("checkpoint layer count mismatch");
    for (auto& l : layers_) {
        const std::string kind = read_str(is);
        if (kind != l->kind())
            throw FormatError("checkpoint layer kind mismatch: expected " + l->kind() + ", got " + kind);
        read_str(is);  // stored name; construction-time names win
        const std::uint32_t np = read_u32(is);
        auto ps = l->params();
        if (np != ps.size()) throw FormatError("checkpoint param count mismatch in " + kind);
        for (auto* p : ps) read_tensor_into(is, p->value);
        const std::uint32_t nb = read_u32(is);
        auto bs = l->buffers();
        if (nb != bs.size()) throw FormatError("checkpoint buffer count mismatch in " + kind);
        for (auto* b : bs) read_tensor_into(is, *b);
    }
}

// ------------------------------------------------------------------- Adam

Adam::Adam(std::vector<ParamTensor*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

void Adam::step() {
    ++t_;
    const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(t_));
    const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        ParamTensor& p = *params_[pi];
        Tensor& m = m_[pi];
        Tensor& v = v_[pi];
        for (std::size_t i = 0; i < p.value.numel(); ++i) {
            float g = p.grad[i];
            if (cfg_.weight_decay > 0.0f) g += cfg_.weight_decay * p.value[i];
            m[i] = cfg_.beta1 * m[i] + (1.0f - cfg_.beta1) * g;
            v[i] = cfg_.beta2 * v[i] + (1.0f - cfg_.beta2) * g * g;
            const float mhat = m[i] / bc1;
            const float vhat = v[i] / bc2;
            p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto* p : params_) p->zero_grad();
}

void Adam::save(std::ostream& os) const {
    os.write("GLAD", 4);
    write_u32(os, 1);
    write_u64(os, static_cast<std::uint64_t>(t_));
    write_u32(os, static_cast<std::uint32_t>(params_.size()));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        write_tensor(os, m_[i]);
        write_tensor(os, v_[i]);
    }
}

void Adam::load(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "GLAD", 4) != 0) throw FormatError("not an optimizer state blob");
    if (read_u32(is) != 1) throw FormatError("unsupported optimizer state version");
    t_ = static_cast<std::int64_t>(read_u64(is));
    if (read_u32(is) != params_.size()) throw FormatError("optimizer state param count mismatch");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        read_tensor_into(is, m_[i]);
        read_tensor_into(is, v_[i]);
    }
}

// -------------------------------------------------------------- flatteners

std::vector<float> flatten_params(const std::vector<ParamTensor*>& params) {
    std::vector<float> flat;
    for (auto* p : params) flat.insert(flat.end(), p->value.data(), p->value.data() + p->value.numel());
    return flat;
}

void unflatten_params(const std::vector<ParamTensor*>& params, const std::vector<float>& flat) {
    std::size_t off = 0;
    for (auto* p : params) {
        std::memcpy(p->value.data(), flat.data() + off, p->value.numel() * sizeof(float));
        off += p->value.numel();
    }
}

std::vector<float> flatten_grads(const std::vector<ParamTensor*>& params) {
    std::vector<float> flat;
    for (auto* p : params) flat.insert(flat.end(), p->grad.data(), p->grad.data() + p->grad.numel());
    return flat;
}

}  // namespace ganlens::nn
