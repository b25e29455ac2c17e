#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "ganlens/rng.hpp"
#include "ganlens/tensor.hpp"

namespace ganlens::nn {

struct ParamTensor {
    Tensor value;
    Tensor grad;

    void zero_grad() { grad.fill(0.0f); }
};

class Layer {
public:
    virtual ~Layer() = default;

    // forward caches whatever backward needs; backward consumes the cache of
    // the most recent forward (single-writer training loops only)
    virtual Tensor forward(const Tensor& x, bool train) = 0;
    virtual Tensor backward(const Tensor& grad_out) = 0;

    virtual std::vector<ParamTensor*> params() { return {}; }
    virtual std::string kind() const = 0;

    // serialized alongside params (batch-norm running stats)
    virtual std::vector<Tensor*> buffers() { return {}; }

    std::string name;  // optional tap label (grad-cam layers)
};

class Dense : public Layer {
public:
    Dense(int in_dim, int out_dim, Rng& rng, float init_std);
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<ParamTensor*> params() override { return {&w_, &b_}; }
    std::string kind() const override { return "dense"; }

    int in_dim() const { return in_dim_; }
    int out_dim() const { return out_dim_; }

private:
    int in_dim_, out_dim_;
    ParamTensor w_, b_;  // w: [out, in]
    Tensor x_;
};

class Conv2d : public Layer {
public:
    Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng, float init_std);
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<ParamTensor*> params() override { return {&w_, &b_}; }
    std::string kind() const override { return "conv"; }

private:
    int in_ch_, out_ch_, kernel_, stride_, pad_;
    ParamTensor w_, b_;  // w: [out_ch, in_ch*k*k]
    Tensor x_;
};

// fractionally-strided conv; out = (in-1)*stride - 2*pad + kernel
class ConvTranspose2d : public Layer {
public:
    ConvTranspose2d(int in_ch, int out_ch, int kernel, int stride, int pad, Rng& rng, float init_std);
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<ParamTensor*> params() override { return {&w_, &b_}; }
    std::string kind() const override { return "tconv"; }

private:
    int in_ch_, out_ch_, kernel_, stride_, pad_;
    ParamTensor w_, b_;  // w: [in_ch, out_ch*k*k]
    Tensor x_;
};

class BatchNorm2d : public Layer {
public:
    explicit BatchNorm2d(int channels, float momentum = 0.1f, float eps = 1e-5f);
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::vector<ParamTensor*> params() override { return {&gamma_, &beta_}; }
    std::vector<Tensor*> buffers() override { return {&running_mean_, &running_var_}; }
    std::string kind() const override { return "batchnorm"; }

private:
    int channels_;
    float momentum_, eps_;
    ParamTensor gamma_, beta_;
    Tensor running_mean_, running_var_;
    Tensor xhat_, invstd_;
};

class ReLU : public Layer {
public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "relu"; }

private:
    Tensor x_;
};

class LeakyReLU : public Layer {
public:
    explicit LeakyReLU(float slope = 0.2f) : slope_(slope) {}
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "leakyrelu"; }

private:
    float slope_;
    Tensor x_;
};

class Tanh : public Layer {
public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "tanh"; }

private:
    Tensor y_;
};

class MaxPool2d : public Layer {
public:
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "maxpool"; }

private:
    std::vector<int> in_shape_;
    std::vector<std::size_t> argmax_;
};

// [N, ...] -> [N, dims...]; dims exclude the batch axis
class Reshape : public Layer {
public:
    explicit Reshape(std::vector<int> dims) : dims_(std::move(dims)) {}
    Tensor forward(const Tensor& x, bool train) override;
    Tensor backward(const Tensor& grad_out) override;
    std::string kind() const override { return "reshape"; }

private:
    std::vector<int> dims_;
    std::vector<int> in_shape_;
};

class Network {
public:
    Network() = default;
    Network(Network&&) = default;
    Network& operator=(Network&&) = default;

    template <typename L, typename... Args>
    L* add(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L* raw = layer.get();
        layers_.push_back(std::move(layer));
        return raw;
    }

    Tensor forward(const Tensor& x, bool train);
    // also records each layer's output in `taps` (same order as layers)
    Tensor forward_collect(const Tensor& x, bool train, std::vector<Tensor>* taps);

    // backprop down to (and including) layer `until`; returns the gradient
    // w.r.t. that layer's input. until=0 gives the input gradient.
    Tensor backward(const Tensor& grad_out, int until = 0);

    std::vector<ParamTensor*> params();
    void zero_grad();

    int layer_count() const { return static_cast<int>(layers_.size()); }
    Layer& layer(int i) { return *layers_[static_cast<std::size_t>(i)]; }
    const Layer& layer(int i) const { return *layers_[static_cast<std::size_t>(i)]; }
    int find_layer(const std::string& name) const;  // -1 when absent

    std::size_t param_count();

    void save(std::ostream& os) const;
    void load(std::istream& is);  // shapes must match the constructed net

private:
    std::vector<std::unique_ptr<Layer>> layers_;
};

struct AdamConfig {
    float lr = 2e-4f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.0f;
};

class Adam {
public:
    Adam(std::vector<ParamTensor*> params, AdamConfig cfg);
    void step();
    void zero_grad();
    const AdamConfig& config() const { return cfg_; }
    void set_lr(float lr) { cfg_.lr = lr; }

    void save(std::ostream& os) const;
    void load(std::istream& is);

private:
    std::vector<ParamTensor*> params_;
    AdamConfig cfg_;
    std::vector<Tensor> m_, v_;
    std::int64_t t_ = 0;
};

// grad check support: flattened parameter/gradient access
std::vector<float> flatten_params(const std::vector<ParamTensor*>& params);
void unflatten_params(const std::vector<ParamTensor*>& params, const std::vector<float>& flat);
std::vector<float> flatten_grads(const std::vector<ParamTensor*>& params);

}  // namespace ganlens::nn
