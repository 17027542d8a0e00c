#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace cdmamba {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Storage behind a Tensor handle. Values are immutable once an op has
/// produced them; only `grad` is written after creation (and `data` of
/// leaf parameters, by the optimizer).
struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a backward sweep touches it
    bool requires_grad = false;
    std::string op = "leaf";
};

/// Shared handle to a dense row-major double tensor.
///
/// Copies alias the same storage. Ops never mutate their inputs; they
/// allocate a fresh result and, when a Tape is active on the calling thread
/// and any input requires a gradient, record a backward closure.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const { return impl().data.size(); }

    std::span<const double> data() const { return impl().data; }
    /// Direct write access. Intended for leaves (parameter updates, test
    /// fixtures); writing into an op result invalidates recorded backward
    /// closures that saved it.
    std::span<double> mutable_data() { return impl().data; }
    double item() const;
    double at(std::size_t flat_index) const { return impl().data.at(flat_index); }

    bool requires_grad() const { return impl().requires_grad; }
    Tensor& set_requires_grad(bool on);

    bool has_grad() const { return !impl().grad.empty(); }
    std::span<const double> grad() const { return impl().grad; }
    /// Gradient buffer, allocated as zeros on first access.
    std::span<double> mutable_grad();
    void zero_grad();
    /// Copy of the gradient as a standalone tensor (zeros when absent).
    Tensor grad_tensor() const;

    /// Deep copy of the values with no gradient participation.
    Tensor detach() const;
    const std::string& op_name() const { return impl().op; }

    TensorImpl& impl() const;
    const std::shared_ptr<TensorImpl>& impl_ptr() const noexcept { return impl_; }
    bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

private:
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl> impl_;

    friend Tensor make_tensor(std::shared_ptr<TensorImpl> impl);
};

Tensor make_tensor(std::shared_ptr<TensorImpl> impl);

/// Ordered record of the differentiable ops executed on this thread while
/// the tape is alive. Constructing a Tape makes it the thread's active tape;
/// destruction restores whatever was active before.
class Tape {
public:
    using BackwardFn = std::function<void(std::span<const double> grad_out)>;

    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Reverse sweep from a scalar loss. Leaf gradients accumulate (+=).
    /// A tape supports exactly one sweep.
    void backward(const Tensor& loss);

    bool consumed() const noexcept { return consumed_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    void record(std::string op, std::vector<std::shared_ptr<TensorImpl>> inputs,
                std::shared_ptr<TensorImpl> output, BackwardFn fn);

    static Tape* current() noexcept;

private:
    struct Node {
        std::string op;
        std::vector<std::shared_ptr<TensorImpl>> inputs;
        std::shared_ptr<TensorImpl> output;
        BackwardFn fn;
    };
    std::vector<Node> nodes_;
    Tape* previous_ = nullptr;
    bool consumed_ = false;
};

inline void backward(Tape& tape, const Tensor& loss) { tape.backward(loss); }

/// NaN/Inf guard applied to every op output. On by default in builds
/// without NDEBUG; tests switch it on explicitly.
void set_finite_check(bool enabled) noexcept;
bool finite_check_enabled() noexcept;

/// Little-endian dump: u32 rank, rank u32 dims, float64 payload (`.tsr`).
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

namespace detail {

/// True when a tape is active and any input wants a gradient.
bool tracking(std::initializer_list<const Tensor*> inputs);

/// Wraps freshly computed values as an op result and runs the finite guard.
Tensor make_result(const char* op, Shape shape, std::vector<double> values);

/// Marks `out` as requiring grad and records `fn` on the active tape.
void record(const Tensor& out, std::vector<Tensor> inputs, Tape::BackwardFn fn);

/// Gradient accumulator of `t`, or an empty span when `t` wants none.
std::span<double> grad_sink(const Tensor& t);

}  // namespace detail

}  // namespace cdmamba
