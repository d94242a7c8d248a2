#include "roadfusion/tape.hpp"

#include <algorithm>
#include <string>

#include "roadfusion/error.hpp"

namespace rf {

void Tape::check(NodeId id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size())) {
        throw Error("tape: node id " + std::to_string(id) + " does not exist (backward before forward?)");
    }
}

Tape::NodeId Tape::push(Tensor value, std::vector<NodeId> inputs, BackwardFn backward) {
    for (NodeId in : inputs) check(in);
    nodes_.push_back(Node{std::move(value), Tensor(), std::move(inputs), std::move(backward)});
    return static_cast<NodeId>(nodes_.size()) - 1;
}

Tensor& Tape::grad_buffer(NodeId id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) n.grad = Tensor::zeros(n.value.dims());
    return n.grad;
}

Tape::NodeId Tape::leaf(Tensor value) {
    return push(std::move(value), {}, nullptr);
}

const Tensor& Tape::value(NodeId id) const {
    check(id);
    return nodes_[static_cast<std::size_t>(id)].value;
}

const Tensor& Tape::grad(NodeId id) const {
    check(id);
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty()) {
        const_cast<Node&>(n).grad = Tensor::zeros(n.value.dims());
    }
    return n.grad;
}

void Tape::zero_grad() {
    for (auto& n : nodes_) {
        if (!n.grad.empty()) n.grad = Tensor::zeros(n.value.dims());
    }
}

void Tape::backward(NodeId root, const Tensor* seed) {
    check(root);
    Node& r = nodes_[static_cast<std::size_t>(root)];
    Tensor& rg = grad_buffer(root);
    if (seed != nullptr) {
        if (!seed->same_shape(r.value)) throw ShapeError("backward seed shape mismatch");
        for (std::size_t i = 0; i < rg.size(); ++i) rg[i] += (*seed)[i];
    } else {
        if (r.value.size() != 1) throw ShapeError("backward without seed requires a scalar root");
        rg[0] += 1.0;
    }
    // Nodes are appended in topological order, so one reverse pass suffices.
    // Gradients accumulated into `root` by later backward() calls stack up,
    // which is the documented sum semantics.
    std::vector<Tensor> upstream(nodes_.size());
    upstream[static_cast<std::size_t>(root)] = seed ? *seed : Tensor({1}, 1.0);
    for (NodeId id = root; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.backward || upstream[static_cast<std::size_t>(id)].empty()) continue;
        std::vector<const Tensor*> in_values;
        std::vector<Tensor*> in_grads;
        in_values.reserve(n.inputs.size());
        in_grads.reserve(n.inputs.size());
        std::vector<Tensor> local(n.inputs.size());
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            in_values.push_back(&nodes_[static_cast<std::size_t>(n.inputs[k])].value);
            local[k] = Tensor::zeros(in_values[k]->dims());
            in_grads.push_back(&local[k]);
        }
        n.backward(upstream[static_cast<std::size_t>(id)], in_values, in_grads);
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
            const NodeId in = n.inputs[k];
            Tensor& g = grad_buffer(in);
            Tensor& up = upstream[static_cast<std::size_t>(in)];
            if (up.empty()) up = Tensor::zeros(g.dims());
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += local[k][i];
                up[i] += local[k][i];
            }
        }
    }
}

Tape::NodeId Tape::custom(std::vector<NodeId> inputs, Tensor value, BackwardFn backward) {
    return push(std::move(value), std::move(inputs), std::move(backward));
}

Tape::NodeId Tape::conv2d(NodeId x, NodeId w, NodeId b, Padding pad, int stride) {
    Tensor out = rf::conv2d(value(x), value(w), value(b), pad, stride);
    auto bwd = [pad, stride](const Tensor& up, const std::vector<const Tensor*>& in,
                             const std::vector<Tensor*>& gr) {
        const Tensor& xv = *in[0];
        const Tensor& wv = *in[1];
        Tensor& gx = *gr[0];
        Tensor& gw = *gr[1];
        Tensor& gb = *gr[2];
        const int h = xv.dim(0), wd = xv.dim(1), cin = xv.dim(2);
        const int kh = wv.dim(0), kw = wv.dim(1), cout = wv.dim(3);
        const int py = pad == Padding::same ? (kh - 1) / 2 : 0;
        const int px = pad == Padding::same ? (kw - 1) / 2 : 0;
        const int oh = up.dim(0), ow = up.dim(1);
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                for (int oc = 0; oc < cout; ++oc) {
                    const double g = up.at(oy, ox, oc);
                    if (g == 0.0) continue;
                    gb[static_cast<std::size_t>(oc)] += g;
                    for (int ky = 0; ky < kh; ++ky) {
                        const int iy = oy * stride + ky - py;
                        if (iy < 0 || iy >= h) continue;
                        for (int kx = 0; kx < kw; ++kx) {
                            const int ix = ox * stride + kx - px;
                            if (ix < 0 || ix >= wd) continue;
                            for (int ic = 0; ic < cin; ++ic) {
                                gx.at(iy, ix, ic) += g * wv.at4(ky, kx, ic, oc);
                                gw.at4(ky, kx, ic, oc) += g * xv.at(iy, ix, ic);
                            }
                        }
                    }
                }
            }
        }
    };
    return push(std::move(out), {x, w, b}, bwd);
}

Tape::NodeId Tape::relu(NodeId x) {
    Tensor out = rf::relu(value(x));
    auto bwd = [](const Tensor& up, const std::vector<const Tensor*>& in,
                  const std::vector<Tensor*>& gr) {
        const Tensor& xv = *in[0];
        Tensor& gx = *gr[0];
        for (std::size_t i = 0; i < xv.size(); ++i) {
            if (xv[i] > 0.0) gx[i] += up[i];
        }
    };
    return push(std::move(out), {x}, bwd);
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    Tensor out = rf::add(value(a), value(b));
    auto bwd = [](const Tensor& up, const std::vector<const Tensor*>&,
                  const std::vector<Tensor*>& gr) {
        for (std::size_t i = 0; i < up.size(); ++i) {
            (*gr[0])[i] += up[i];
            (*gr[1])[i] += up[i];
        }
    };
    return push(std::move(out), {a, b}, bwd);
}

Tape::NodeId Tape::scale(NodeId a, double s) {
    Tensor out = rf::scale(value(a), s);
    auto bwd = [s](const Tensor& up, const std::vector<const Tensor*>&,
                   const std::vector<Tensor*>& gr) {
        for (std::size_t i = 0; i < up.size(); ++i) (*gr[0])[i] += s * up[i];
    };
    return push(std::move(out), {a}, bwd);
}

Tape::NodeId Tape::concat_channels(NodeId a, NodeId b) {
    Tensor out = rf::concat_channels(value(a), value(b));
    auto bwd = [](const Tensor& up, const std::vector<const Tensor*>& in,
                  const std::vector<Tensor*>& gr) {
        const int h = up.dim(0), w = up.dim(1);
        const int ca = in[0]->dim(2), cb = in[1]->dim(2);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                for (int c = 0; c < ca; ++c) gr[0]->at(y, x, c) += up.at(y, x, c);
                for (int c = 0; c < cb; ++c) gr[1]->at(y, x, c) += up.at(y, x, ca + c);
            }
        }
    };
    return push(std::move(out), {a, b}, bwd);
}

Tape::NodeId Tape::upsample_nearest2x(NodeId x) {
    Tensor out = rf::upsample_nearest2x(value(x));
    auto bwd = [](const Tensor& up, const std::vector<const Tensor*>& in,
                  const std::vector<Tensor*>& gr) {
        const int h = in[0]->dim(0), w = in[0]->dim(1), c = in[0]->dim(2);
        for (int y = 0; y < 2 * h; ++y)
            for (int xx = 0; xx < 2 * w; ++xx)
                for (int cc = 0; cc < c; ++cc)
                    gr[0]->at(y / 2, xx / 2, cc) += up.at(y, xx, cc);
    };
    return push(std::move(out), {x}, bwd);
}

Tape::NodeId Tape::avg_pool_global(NodeId x) {
    Tensor out = rf::avg_pool_global(value(x));
    auto bwd = [](const Tensor& up, const std::vector<const Tensor*>& in,
                  const std::vector<Tensor*>& gr) {
        const int h = in[0]->dim(0), w = in[0]->dim(1), c = in[0]->dim(2);
        const double inv = 1.0 / (static_cast<double>(h) * w);
        for (int cc = 0; cc < c; ++cc) {
            const double g = up.at(0, 0, cc) * inv;
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) gr[0]->at(y, xx, cc) += g;
        }
    };
    return push(std::move(out), {x}, bwd);
}

Tape::NodeId Tape::fully_connected(NodeId x, NodeId w, NodeId b) {
    Tensor out = rf::fully_connected(value(x), value(w), value(b));
    auto bwd = [](const Tensor& up, const std::vector<const Tensor*>& in,
                  const std::vector<Tensor*>& gr) {
        const Tensor& xv = *in[0];
        const Tensor& wv = *in[1];
        const int m = wv.dim(0), n = wv.dim(1);
        for (int i = 0; i < m; ++i) {
            const double g = up[static_cast<std::size_t>(i)];
            (*gr[2])[static_cast<std::size_t>(i)] += g;
            for (int j = 0; j < n; ++j) {
                gr[0]->operator[](static_cast<std::size_t>(j)) += g * wv.at(i, j);
                gr[1]->at(i, j) += g * xv[static_cast<std::size_t>(j)];
            }
        }
    };
    return push(std::move(out), {x, w, b}, bwd);
}

Tape::NodeId Tape::reshape(NodeId x, std::vector<int> dims) {
    Tensor out = value(x).reshaped(std::move(dims));
    auto bwd = [](const Tensor& up, const std::vector<const Tensor*>&,
                  const std::vector<Tensor*>& gr) {
        for (std::size_t i = 0; i < up.size(); ++i) (*gr[0])[i] += up[i];
    };
    return push(std::move(out), {x}, bwd);
}

Tape::NodeId Tape::softmax_ce(NodeId logits, const LabelImage& labels,
                              std::vector<double> class_weights, int ignore_class,
                              Tensor* probs_out) {
    SoftmaxCeResult res = rf::softmax_ce(value(logits), labels, class_weights, ignore_class);
    if (probs_out != nullptr) *probs_out = res.probs;
    Tensor logit_grad = std::move(res.grad);
    auto bwd = [logit_grad](const Tensor& up, const std::vector<const Tensor*>&,
                            const std::vector<Tensor*>& gr) {
        const double g = up[0];
        for (std::size_t i = 0; i < logit_grad.size(); ++i) (*gr[0])[i] += g * logit_grad[i];
    };
    return push(Tensor({1}, res.loss), {logits}, bwd);
}

}  // namespace rf
