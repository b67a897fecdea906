#include "sslnet/arch.hpp"

namespace sslnet {

// MAdds per node for one sample: conv = out_c*in_c*k^2*out_h*out_w,
// depthwise = c*k^2*out_h*out_w, fc = in*out. Shift, pooling, BN, ReLU,
// split/concat, add and channel scaling move or combine data without
// multiply-accumulates and count zero.
CostReport count_cost(const Graph& g, Shape4 input_shape) {
    input_shape.n = 1;
    const std::vector<Shape4> shapes = g.infer_shapes(input_shape);

    CostReport report;
    for (int id = 0; id < g.size(); ++id) {
        const Node& nd = g.node(id);
        const Shape4 out = shapes[id];
        switch (nd.kind) {
            case OpKind::Conv:
                report.madds += static_cast<std::uint64_t>(nd.conv->out_c) * nd.conv->in_c *
                                nd.conv->k * nd.conv->k * out.h * out.w;
                break;
            case OpKind::DepthwiseConv:
                report.madds += static_cast<std::uint64_t>(nd.dw->c) * nd.dw->k * nd.dw->k * out.h * out.w;
                break;
            case OpKind::FC:
                report.madds += static_cast<std::uint64_t>(nd.fc->in) * nd.fc->out;
                break;
            default:
                break;
        }
    }
    g.visit_params([&](const ParamRef& p) {
        if (param_is_learnable(p.cls)) report.params += p.value->size();
    });
    return report;
}

}  // namespace sslnet
