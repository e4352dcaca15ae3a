#include "advlab/classifier.hpp"

#include "advlab/errors.hpp"

namespace advlab {

std::vector<double> classifier_logits(const Classifier& c, const Image& x) {
    if (x.height != c.input_height() || x.width != c.input_width() ||
        x.channels != c.input_channels())
        throw InvalidInputError("classifier: input shape mismatch");
    std::vector<double> xd = to_doubles(x);
    std::vector<double> z(c.num_classes());
    c.logits_batch(xd.data(), 1, z.data());
    return z;
}

int classifier_predict(const Classifier& c, const Image& x) {
    std::vector<double> z = classifier_logits(c, x);
    return argmax_lowest(z.data(), int(z.size()));
}

std::vector<int> predict_batch(const Classifier& c, const std::vector<Image>& xs) {
    std::vector<int> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = classifier_predict(c, xs[i]);
    return out;
}

} // namespace advlab
