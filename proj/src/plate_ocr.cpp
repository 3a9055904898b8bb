#include "platefind/plate_ocr.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include <json.hpp>
#include <opencv2/imgproc.hpp>

#include "platefind/plate_localization.hpp"

namespace platefind {

cv::Mat1b to_gray(const cv::Mat& image) {
  if (image.empty()) throw Error(ErrorCode::EmptyImage, "image has no pixels");
  if (image.type() == CV_8UC1) return image;
  cv::Mat gray;
  if (image.type() == CV_8UC3) {
    cv::cvtColor(image, gray, cv::COLOR_BGR2GRAY);
  } else if (image.type() == CV_8UC4) {
    cv::cvtColor(image, gray, cv::COLOR_BGRA2GRAY);
  } else {
    throw Error(ErrorCode::InvalidArgument, "unsupported image type for OCR");
  }
  return gray;
}

int otsu_threshold(const cv::Mat1b& gray) {
  std::array<double, 256> hist{};
  for (int y = 0; y < gray.rows; ++y) {
    const uchar* row = gray.ptr<uchar>(y);
    for (int x = 0; x < gray.cols; ++x) hist[row[x]] += 1.0;
  }
  const double total = static_cast<double>(gray.total());
  double sum_all = 0.0;
  int levels = 0;
  for (int i = 0; i < 256; ++i) {
    sum_all += i * hist[static_cast<std::size_t>(i)];
    levels += hist[static_cast<std::size_t>(i)] > 0;
  }
  if (levels < 2) return -1;

  double weight_low = 0.0, sum_low = 0.0, best = -1.0;
  int best_t = -1;
  for (int t = 0; t < 255; ++t) {
    weight_low += hist[static_cast<std::size_t>(t)];
    sum_low += t * hist[static_cast<std::size_t>(t)];
    const double weight_high = total - weight_low;
    if (weight_low == 0 || weight_high == 0) continue;
    const double mean_low = sum_low / weight_low;
    const double mean_high = (sum_all - sum_low) / weight_high;
    const double between = weight_low * weight_high * (mean_low - mean_high) * (mean_low - mean_high);
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  return best_t;
}

cv::Mat1b binarize(const cv::Mat& plate) {
  const cv::Mat1b gray = to_gray(plate);
  cv::Mat1b out(gray.size(), static_cast<uchar>(0));
  const int t = otsu_threshold(gray);
  if (t < 0) return out;
  const int dark = cv::countNonZero(gray <= t);
  const bool dark_is_foreground = dark * 2 <= static_cast<int>(gray.total());
  for (int y = 0; y < gray.rows; ++y) {
    const uchar* in = gray.ptr<uchar>(y);
    uchar* o = out.ptr<uchar>(y);
    for (int x = 0; x < gray.cols; ++x) {
      const bool is_dark = in[x] <= t;
      o[x] = (is_dark == dark_is_foreground) ? 255 : 0;
    }
  }
  return out;
}

namespace {

struct Component {
  int id = 0;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // inclusive-exclusive
  int area = 0;
  int height() const { return y1 - y0; }
  int width() const { return x1 - x0; }
  double center_y() const { return (y0 + y1) / 2.0; }
};

std::vector<Component> label_components(const cv::Mat1b& binary, cv::Mat1i& labels) {
  labels = cv::Mat1i(binary.size(), 0);
  std::vector<Component> comps;
  std::vector<cv::Point> stack;
  for (int y = 0; y < binary.rows; ++y) {
    for (int x = 0; x < binary.cols; ++x) {
      if (binary(y, x) == 0 || labels(y, x) != 0) continue;
      Component c;
      c.id = static_cast<int>(comps.size()) + 1;
      c.x0 = c.x1 = x;
      c.y0 = c.y1 = y;
      stack.assign(1, {x, y});
      labels(y, x) = c.id;
      while (!stack.empty()) {
        const cv::Point p = stack.back();
        stack.pop_back();
        ++c.area;
        c.x0 = std::min(c.x0, p.x);
        c.x1 = std::max(c.x1, p.x);
        c.y0 = std::min(c.y0, p.y);
        c.y1 = std::max(c.y1, p.y);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = p.x + dx, ny = p.y + dy;
            if (nx < 0 || ny < 0 || nx >= binary.cols || ny >= binary.rows) continue;
            if (binary(ny, nx) == 0 || labels(ny, nx) != 0) continue;
            labels(ny, nx) = c.id;
            stack.push_back({nx, ny});
          }
        }
      }
      ++c.x1;
      ++c.y1;
      comps.push_back(c);
    }
  }
  return comps;
}

}  // namespace

Segmentation segment_plate(const cv::Mat1b& binary, const SegmentationConfig& config) {
  Segmentation seg;
  if (binary.empty()) throw Error(ErrorCode::NoCharactersFound, "empty plate raster");
  const std::vector<Component> all = label_components(binary, seg.labels);

  std::vector<Component> candidates;
  for (const Component& c : all) {
    const double rel_h = static_cast<double>(c.height()) / binary.rows;
    const double aspect = static_cast<double>(c.height()) / c.width();
    if (rel_h < config.min_height || rel_h > config.max_height) continue;
    if (aspect < config.min_aspect || aspect > config.max_aspect) continue;
    if (config.drop_border_touching &&
        (c.x0 == 0 || c.y0 == 0 || c.x1 >= binary.cols || c.y1 >= binary.rows)) {
      continue;
    }
    candidates.push_back(c);
  }
  if (candidates.empty()) throw Error(ErrorCode::NoCharactersFound, "no character-sized components");

  // Text line: the largest set whose vertical centres all lie within half the
  // median component height. Ties go to the set covering more ink.
  std::vector<int> heights;
  for (const Component& c : candidates) heights.push_back(c.height());
  std::nth_element(heights.begin(), heights.begin() + static_cast<std::ptrdiff_t>(heights.size() / 2), heights.end());
  const double window = heights[heights.size() / 2] / 2.0;

  std::sort(candidates.begin(), candidates.end(),
            [](const Component& a, const Component& b) { return a.center_y() < b.center_y(); });
  std::size_t best_lo = 0, best_hi = 0;
  long best_area = -1;
  for (std::size_t lo = 0, hi = 0; lo < candidates.size(); ++lo) {
    hi = std::max(hi, lo);
    while (hi + 1 < candidates.size() && candidates[hi + 1].center_y() - candidates[lo].center_y() <= window) ++hi;
    long area = 0;
    for (std::size_t i = lo; i <= hi; ++i) area += candidates[i].area;
    if (hi - lo > best_hi - best_lo || (hi - lo == best_hi - best_lo && area > best_area)) {
      best_lo = lo;
      best_hi = hi;
      best_area = area;
    }
  }
  std::vector<Component> line(candidates.begin() + static_cast<std::ptrdiff_t>(best_lo),
                              candidates.begin() + static_cast<std::ptrdiff_t>(best_hi) + 1);
  std::sort(line.begin(), line.end(), [](const Component& a, const Component& b) {
    return a.x0 != b.x0 ? a.x0 < b.x0 : a.y0 < b.y0;
  });
  for (std::size_t i = 0; i < line.size(); ++i) {
    const Component& c = line[i];
    seg.boxes.push_back({BoundingBox(c.x0, c.y0, c.x1, c.y1), static_cast<int>(i)});
    seg.label_of.push_back(c.id);
  }
  return seg;
}

std::vector<CharBox> segment_characters(const cv::Mat1b& binary, const SegmentationConfig& config) {
  return segment_plate(binary, config).boxes;
}

cv::Mat1f prepare_glyph(const cv::Mat& glyph) {
  cv::Mat1f out(kGlyphSize, kGlyphSize, 0.0f);
  if (glyph.empty()) return out;
  cv::Mat1f src;
  to_gray(glyph).convertTo(src, CV_32F, 1.0 / 255.0);

  int x0 = src.cols, y0 = src.rows, x1 = -1, y1 = -1;
  for (int y = 0; y < src.rows; ++y) {
    for (int x = 0; x < src.cols; ++x) {
      if (src(y, x) <= 0.0f) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return out;
  const cv::Mat1f crop = src(cv::Rect(x0, y0, x1 - x0 + 1, y1 - y0 + 1));
  constexpr int inner = kGlyphSize - 4;
  const double scale = static_cast<double>(inner) / std::max(crop.cols, crop.rows);
  const int w = std::clamp(static_cast<int>(std::lround(crop.cols * scale)), 1, inner);
  const int h = std::clamp(static_cast<int>(std::lround(crop.rows * scale)), 1, inner);
  cv::Mat1f resized;
  cv::resize(crop, resized, cv::Size(w, h), 0, 0, scale < 1.0 ? cv::INTER_AREA : cv::INTER_LINEAR);
  resized.copyTo(out(cv::Rect((kGlyphSize - w) / 2, (kGlyphSize - h) / 2, w, h)));
  return out;
}

CharPrediction prediction_from_distribution(const ClassDistribution& dist) {
  double sum = 0.0;
  for (double p : dist) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw Error(ErrorCode::ModelFailure, "distribution has a negative or non-finite entry");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw Error(ErrorCode::ModelFailure, "distribution does not sum to 1");
  CharPrediction pred;
  pred.alternates.reserve(kNumCharClasses);
  for (int i = 0; i < kNumCharClasses; ++i) {
    pred.alternates.emplace_back(kPlateAlphabet[static_cast<std::size_t>(i)], dist[static_cast<std::size_t>(i)]);
  }
  std::stable_sort(pred.alternates.begin(), pred.alternates.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  pred.ch = pred.alternates.front().first;
  pred.confidence = pred.alternates.front().second;
  return pred;
}

namespace {

CharPrediction classify_prepared(const cv::Mat1f& prepared, const CharClassifier& model) {
  ClassDistribution dist;
  try {
    dist = model.predict(prepared);
  } catch (const std::exception& e) {
    throw Error(ErrorCode::ModelFailure, model.name() + ": " + e.what());
  }
  return prediction_from_distribution(dist);
}

}  // namespace

CharPrediction classify_character(const cv::Mat& glyph, const CharClassifier& model) {
  if (glyph.empty()) throw Error(ErrorCode::InvalidArgument, "glyph crop is empty");
  return classify_prepared(prepare_glyph(glyph), model);
}

double glyph_similarity(const cv::Mat1f& a, const cv::Mat1f& b) {
  const double n = static_cast<double>(a.total());
  const double ma = cv::sum(a)[0] / n;
  const double mb = cv::sum(b)[0] / n;
  double num = 0, da = 0, db = 0;
  for (int y = 0; y < a.rows; ++y) {
    for (int x = 0; x < a.cols; ++x) {
      const double va = a(y, x) - ma;
      const double vb = b(y, x) - mb;
      num += va * vb;
      da += va * va;
      db += vb * vb;
    }
  }
  if (da <= 0 || db <= 0) return 0.0;
  return num / std::sqrt(da * db);
}

PlateReading read_plate(const cv::Mat& plate_image, const CharClassifier& model, const OcrConfig& config) {
  if (!(config.adapt_threshold >= 0.0 && config.adapt_threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "adapt_threshold must lie in [0,1]");
  }
  const cv::Mat1b binary = binarize(plate_image);
  const Segmentation seg = segment_plate(binary, config.segmentation);

  std::vector<cv::Mat1f> glyphs;
  std::vector<PlateChar> chars;
  for (std::size_t i = 0; i < seg.boxes.size(); ++i) {
    const cv::Rect r = cv::Rect(static_cast<int>(seg.boxes[i].box.x_min()), static_cast<int>(seg.boxes[i].box.y_min()),
                                static_cast<int>(seg.boxes[i].box.width()), static_cast<int>(seg.boxes[i].box.height()));
    cv::Mat1b glyph = (seg.labels(r) == seg.label_of[i]);
    glyphs.push_back(prepare_glyph(glyph));
    chars.push_back({seg.boxes[i], classify_prepared(glyphs.back(), model), false});
  }

  // Adaptive pass: templates are the mean glyph of each confidently read class.
  std::map<char, cv::Mat1f> templates;
  std::map<char, int> template_count;
  for (std::size_t i = 0; i < chars.size(); ++i) {
    if (chars[i].prediction.confidence < config.adapt_threshold) continue;
    const char c = chars[i].prediction.ch;
    auto [it, inserted] = templates.try_emplace(c, cv::Mat1f(kGlyphSize, kGlyphSize, 0.0f));
    it->second += glyphs[i];
    ++template_count[c];
  }
  for (auto& [c, t] : templates) t /= static_cast<float>(template_count[c]);

  for (std::size_t i = 0; i < chars.size() && !templates.empty(); ++i) {
    CharPrediction& pred = chars[i].prediction;
    if (pred.confidence >= config.adapt_threshold) continue;
    char vote = 0;
    double best = -2.0;
    std::map<char, double> sims;
    for (const auto& [c, t] : templates) {
      sims[c] = glyph_similarity(glyphs[i], t);
      if (sims[c] > best) {
        best = sims[c];
        vote = c;
      }
    }
    if (vote == pred.ch) continue;
    // Compare against the current class's template when this plate has one,
    // otherwise against the runner-up template.
    double reference = 0.0;
    if (auto it = sims.find(pred.ch); it != sims.end()) {
      reference = it->second;
    } else {
      for (const auto& [c, s] : sims) {
        if (c != vote) reference = std::max(reference, s);
      }
    }
    if (best - reference <= config.adapt_margin) continue;

    // Equal-weight blend of the classifier distribution with the vote keeps
    // the vote on top and the distribution normalized.
    ClassDistribution blended{};
    for (const auto& [c, p] : pred.alternates) blended[static_cast<std::size_t>(char_class_index(c))] = 0.5 * p;
    blended[static_cast<std::size_t>(char_class_index(vote))] += 0.5;
    pred = prediction_from_distribution(blended);
    chars[i].adapted = true;
  }

  std::string text;
  double log_conf = 0.0;
  for (const PlateChar& c : chars) {
    text.push_back(c.prediction.ch);
    log_conf += std::log(std::max(c.prediction.confidence, 1e-300));
  }
  if (text.empty()) throw Error(ErrorCode::EmptyPlate, "no characters read");
  const double plate_conf = std::exp(log_conf / static_cast<double>(chars.size()));
  return PlateReading{PlateString(std::move(text)), std::move(chars), plate_conf};
}

PlateReading read_plate(const RectifiedPlate& plate, const CharClassifier& model, const OcrConfig& config) {
  return read_plate(plate.image, model, config);
}

ClassDistribution UniformClassifier::predict(const cv::Mat1f&) const {
  ClassDistribution d;
  d.fill(1.0 / kNumCharClasses);
  return d;
}

MlpCharClassifier::MlpCharClassifier(Eigen::MatrixXf w1, Eigen::VectorXf b1, Eigen::MatrixXf w2, Eigen::VectorXf b2)
    : w1_(std::move(w1)), b1_(std::move(b1)), w2_(std::move(w2)), b2_(std::move(b2)) {
  constexpr int inputs = kGlyphSize * kGlyphSize;
  if (w1_.cols() != inputs || b1_.size() != w1_.rows() || w2_.rows() != kNumCharClasses ||
      w2_.cols() != w1_.rows() || b2_.size() != kNumCharClasses) {
    throw Error(ErrorCode::ModelFailure, "inconsistent MLP weight shapes");
  }
}

namespace {

Eigen::Map<const Eigen::VectorXf> glyph_vector(const cv::Mat1f& glyph) {
  if (glyph.rows != kGlyphSize || glyph.cols != kGlyphSize || !glyph.isContinuous()) {
    throw Error(ErrorCode::ModelFailure, "classifier expects a continuous 32x32 glyph");
  }
  return {glyph.ptr<float>(0), kGlyphSize * kGlyphSize};
}

ClassDistribution softmax(const Eigen::VectorXf& logits) {
  const double mx = logits.maxCoeff();
  ClassDistribution d;
  double sum = 0.0;
  for (int i = 0; i < kNumCharClasses; ++i) {
    d[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(logits(i)) - mx);
    sum += d[static_cast<std::size_t>(i)];
  }
  for (double& v : d) v /= sum;
  return d;
}

constexpr const char* kModelMagic = "PLATEFIND-OCR 1";

void write_floats(std::ofstream& out, const float* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
}

void read_floats(std::ifstream& in, float* data, std::size_t n) {
  in.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(float)));
  if (!in) throw Error(ErrorCode::ModelFailure, "model file truncated");
}

}  // namespace

ClassDistribution MlpCharClassifier::predict(const cv::Mat1f& glyph) const {
  const Eigen::VectorXf hidden = (w1_ * glyph_vector(glyph) + b1_).cwiseMax(0.0f);
  return softmax(w2_ * hidden + b2_);
}

void MlpCharClassifier::save(const std::string& path) const {
  static_assert(std::endian::native == std::endian::little, "model files are little-endian");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write model file " + path);
  const nlohmann::json descriptor = {{"arch", "mlp"},
                                     {"input", {kGlyphSize, kGlyphSize}},
                                     {"hidden", w1_.rows()},
                                     {"classes", kNumCharClasses},
                                     {"labels", std::string(kPlateAlphabet)},
                                     {"dtype", "float32-le"},
                                     {"layout", "w1 row-major, b1, w2 row-major, b2"}};
  out << kModelMagic << '\n' << descriptor.dump() << '\n';
  using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor w1 = w1_;
  const RowMajor w2 = w2_;
  write_floats(out, w1.data(), static_cast<std::size_t>(w1.size()));
  write_floats(out, b1_.data(), static_cast<std::size_t>(b1_.size()));
  write_floats(out, w2.data(), static_cast<std::size_t>(w2.size()));
  write_floats(out, b2_.data(), static_cast<std::size_t>(b2_.size()));
  if (!out) throw Error(ErrorCode::IoError, "failed writing model file " + path);
}

MlpCharClassifier MlpCharClassifier::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::ModelFailure, "cannot open model file " + path);
  std::string magic, header;
  std::getline(in, magic);
  std::getline(in, header);
  if (magic != kModelMagic) throw Error(ErrorCode::ModelFailure, path + " is not a plate OCR model");
  nlohmann::json d;
  try {
    d = nlohmann::json::parse(header);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ModelFailure, std::string("bad model descriptor: ") + e.what());
  }
  if (d.value("arch", "") != "mlp" || d.value("labels", "") != kPlateAlphabet ||
      d.value("classes", 0) != kNumCharClasses || d.value("dtype", "") != "float32-le") {
    throw Error(ErrorCode::ModelFailure, "unsupported model descriptor " + header);
  }
  const int hidden = d.at("hidden").get<int>();
  using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor w1(hidden, kGlyphSize * kGlyphSize);
  Eigen::VectorXf b1(hidden);
  RowMajor w2(kNumCharClasses, hidden);
  Eigen::VectorXf b2(kNumCharClasses);
  read_floats(in, w1.data(), static_cast<std::size_t>(w1.size()));
  read_floats(in, b1.data(), static_cast<std::size_t>(b1.size()));
  read_floats(in, w2.data(), static_cast<std::size_t>(w2.size()));
  read_floats(in, b2.data(), static_cast<std::size_t>(b2.size()));
  return MlpCharClassifier(w1, b1, w2, b2);
}

MlpCharClassifier train_char_classifier(const std::vector<GlyphSample>& samples, const TrainingConfig& config) {
  std::array<int, kNumCharClasses> per_class{};
  for (const GlyphSample& s : samples) {
    if (s.label < 0 || s.label >= kNumCharClasses) throw Error(ErrorCode::InvalidArgument, "sample label out of range");
    ++per_class[static_cast<std::size_t>(s.label)];
  }
  for (int c = 0; c < kNumCharClasses; ++c) {
    if (per_class[static_cast<std::size_t>(c)] < 10) {
      throw Error(ErrorCode::InsufficientData, std::string("class '") + kPlateAlphabet[static_cast<std::size_t>(c)] +
                                                   "' has " + std::to_string(per_class[static_cast<std::size_t>(c)]) +
                                                   " samples, need at least 10");
    }
  }
  if (config.hidden <= 0 || config.epochs <= 0 || config.batch_size <= 0) {
    throw Error(ErrorCode::InvalidArgument, "bad training hyperparameters");
  }

  constexpr int inputs = kGlyphSize * kGlyphSize;
  const int n = static_cast<int>(samples.size());
  Eigen::MatrixXf x(inputs, n);
  for (int i = 0; i < n; ++i) x.col(i) = glyph_vector(samples[static_cast<std::size_t>(i)].glyph);

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  Eigen::MatrixXf w1(config.hidden, inputs);
  Eigen::MatrixXf w2(kNumCharClasses, config.hidden);
  const float s1 = std::sqrt(2.0f / inputs);
  const float s2 = std::sqrt(2.0f / static_cast<float>(config.hidden));
  for (int i = 0; i < w1.size(); ++i) w1.data()[i] = normal(rng) * s1;
  for (int i = 0; i < w2.size(); ++i) w2.data()[i] = normal(rng) * s2;
  Eigen::VectorXf b1 = Eigen::VectorXf::Zero(config.hidden);
  Eigen::VectorXf b2 = Eigen::VectorXf::Zero(kNumCharClasses);

  // Adam state.
  Eigen::MatrixXf mw1 = Eigen::MatrixXf::Zero(w1.rows(), w1.cols()), vw1 = mw1;
  Eigen::MatrixXf mw2 = Eigen::MatrixXf::Zero(w2.rows(), w2.cols()), vw2 = mw2;
  Eigen::VectorXf mb1 = Eigen::VectorXf::Zero(b1.size()), vb1 = mb1;
  Eigen::VectorXf mb2 = Eigen::VectorXf::Zero(b2.size()), vb2 = mb2;
  constexpr float beta1 = 0.9f, beta2 = 0.999f, eps = 1e-8f;
  long step = 0;

  auto adam = [&](auto& w, auto& m, auto& v, const auto& g, float lr) {
    m = beta1 * m + (1 - beta1) * g;
    v = beta2 * v + (1 - beta2) * g.cwiseProduct(g);
    const float c1 = 1 - std::pow(beta1, static_cast<float>(step));
    const float c2 = 1 - std::pow(beta2, static_cast<float>(step));
    w.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates with our own draws so the order does not depend on the
    // standard library's shuffle.
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    const float progress = static_cast<float>(epoch) / static_cast<float>(config.epochs);
    const float lr = static_cast<float>(config.learning_rate) * 0.5f * (1.0f + std::cos(3.14159265f * progress));
    for (int start = 0; start < n; start += config.batch_size) {
      const int b = std::min(config.batch_size, n - start);
      Eigen::MatrixXf xb(inputs, b);
      Eigen::MatrixXf yb = Eigen::MatrixXf::Zero(kNumCharClasses, b);
      for (int k = 0; k < b; ++k) {
        const int idx = order[static_cast<std::size_t>(start + k)];
        xb.col(k) = x.col(idx);
        yb(samples[static_cast<std::size_t>(idx)].label, k) = 1.0f;
      }
      const Eigen::MatrixXf z1 = (w1 * xb).colwise() + b1;
      const Eigen::MatrixXf h = z1.cwiseMax(0.0f);
      Eigen::MatrixXf z2 = (w2 * h).colwise() + b2;
      for (int k = 0; k < b; ++k) {
        z2.col(k).array() -= z2.col(k).maxCoeff();
        z2.col(k) = z2.col(k).array().exp().matrix();
        z2.col(k) /= z2.col(k).sum();
      }
      const Eigen::MatrixXf dz2 = (z2 - yb) / static_cast<float>(b);
      const Eigen::MatrixXf gw2 = dz2 * h.transpose();
      const Eigen::VectorXf gb2 = dz2.rowwise().sum();
      const Eigen::MatrixXf dz1 = (w2.transpose() * dz2).cwiseProduct((z1.array() > 0.0f).cast<float>().matrix());
      const Eigen::MatrixXf gw1 = dz1 * xb.transpose();
      const Eigen::VectorXf gb1 = dz1.rowwise().sum();
      ++step;
      adam(w1, mw1, vw1, gw1, lr);
      adam(b1, mb1, vb1, gb1, lr);
      adam(w2, mw2, vw2, gw2, lr);
      adam(b2, mb2, vb2, gb2, lr);
    }
  }
  return MlpCharClassifier(std::move(w1), std::move(b1), std::move(w2), std::move(b2));
}

double classifier_accuracy(const CharClassifier& model, const std::vector<GlyphSample>& samples) {
  if (samples.empty()) return 0.0;
  int correct = 0;
  for (const GlyphSample& s : samples) {
    const ClassDistribution d = model.predict(s.glyph);
    const auto best = std::max_element(d.begin(), d.end()) - d.begin();
    correct += best == s.label;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

}  // namespace platefind
