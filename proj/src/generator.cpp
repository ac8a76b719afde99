#include "vitfill/generator.hpp"

namespace vitfill {

double reconstruction_loss(const ImageTensor& y_hat, const ImageTensor& y, const BinaryMask& m,
                           double lambda_known) {
    require_same_shape(y_hat, y, "reconstruction_loss");
    if (y.shape[1] != m.h || y.shape[2] != m.w)
        throw DimensionError("reconstruction_loss: mask does not match image " +
                             y.shape_string());
    if (lambda_known < 0.0)
        throw ValidationError("reconstruction_loss: lambda_known must be >= 0");
    double sm = 0.0, sk = 0.0;
    std::int64_t nm = 0, nk = 0;
    const std::size_t plane = static_cast<std::size_t>(m.h) * m.w;
    for (int c = 0; c < y.shape[0]; ++c) {
        const std::size_t base = c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
            const double d = static_cast<double>(y_hat.data[base + i]) -
                             static_cast<double>(y.data[base + i]);
            if (m.data[i]) {
                sm += d * d;
                ++nm;
            } else {
                sk += d * d;
                ++nk;
            }
        }
    }
    return (nm > 0 ? sm / static_cast<double>(nm) : 0.0) +
           lambda_known * (nk > 0 ? sk / static_cast<double>(nk) : 0.0);
}

} // namespace vitfill
