// Copyright (c) the prefilter Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "prefilter/codec.h"

#include <fcntl.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "prefilter/distortion.h"
#include "prefilter/image.h"
#include "prefilter/image_io.h"

namespace prefilter {

namespace {

namespace fs = std::filesystem;

int codec_timeout_sec() {
  if (const char* env = std::getenv("PREFILTER_CODEC_TIMEOUT_SEC")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 60;
}

fs::path temp_root() {
  if (const char* env = std::getenv("PREFILTER_TMPDIR")) return fs::path(env);
  return fs::temp_directory_path();
}

// Unique scratch path; concurrency-safe across threads and processes.
fs::path unique_temp(const std::string& tag, const std::string& ext) {
  static std::atomic<uint64_t> counter{0};
  const uint64_t id = counter.fetch_add(1);
  return temp_root() / ("prefilter_" + tag + "_" + std::to_string(::getpid()) +
                        "_" + std::to_string(id) + ext);
}

std::string substitute(std::string tpl, const std::string& key,
                       const std::string& value) {
  size_t pos;
  while ((pos = tpl.find(key)) != std::string::npos)
    tpl.replace(pos, key.size(), value);
  return tpl;
}

// Runs `cmd` through /bin/sh with a timeout; stderr goes to a scratch file
// that is inlined into the thrown diagnostic on failure.
void run_command(const std::string& cmd, const std::string& what) {
  const fs::path errfile = unique_temp("stderr", ".txt");
  const pid_t pid = fork();
  if (pid < 0) throw AdapterError(what + ": fork failed");
  if (pid == 0) {
    setpgid(0, 0);
    const int fd = ::open(errfile.c_str(), O_CREAT | O_WRONLY | O_TRUNC, 0600);
    if (fd >= 0) {
      dup2(fd, 2);
      dup2(fd, 1);
      ::close(fd);
    }
    execl("/bin/sh", "sh", "-c", cmd.c_str(), nullptr);
    _exit(127);
  }
  const int timeout_ms = codec_timeout_sec() * 1000;
  int waited_ms = 0;
  int status = 0;
  while (true) {
    const pid_t r = waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0) throw AdapterError(what + ": waitpid failed");
    if (waited_ms >= timeout_ms) {
      kill(-pid, SIGKILL);
      waitpid(pid, &status, 0);
      std::error_code ec;
      fs::remove(errfile, ec);
      throw AdapterError(what + ": timed out after " +
                         std::to_string(codec_timeout_sec()) + "s: " + cmd);
    }
    usleep(2000);
    waited_ms += 2;
  }
  std::string diag;
  {
    std::ifstream f(errfile);
    diag.assign(std::istreambuf_iterator<char>(f),
                std::istreambuf_iterator<char>());
  }
  std::error_code ec;
  fs::remove(errfile, ec);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    if (diag.size() > 800) diag = diag.substr(0, 800) + "...";
    throw AdapterError(what + ": exit " + std::to_string(code) + ": " + cmd +
                       (diag.empty() ? "" : "\n" + diag));
  }
}

class JpegCodec final : public Codec {
 public:
  JpegCodec() {
    spec_.name = "jpeg";
    spec_.quality_min = 1;
    spec_.quality_max = 100;
    spec_.extension = ".jpg";
    spec_.colorspace = "ycbcr";
  }
  const CodecAdapter& spec() const override { return spec_; }

  EncodeResult encode_decode(const Tensor& image, int quality) const override {
    check_quality(quality);
    const ImageU8 img = tensor_to_u8(image);
    const std::vector<uint8_t> bytes = jpeg_encode(img, quality);
    EncodeResult r;
    r.compressed_bytes = bytes.size();
    r.bpp = 8.0 * double(bytes.size()) / (double(image.h()) * image.w());
    r.decoded = u8_to_tensor(jpeg_decode(bytes));
    return r;
  }

 private:
  CodecAdapter spec_;
};

class IdentityCodec final : public Codec {
 public:
  IdentityCodec() {
    spec_.name = "identity";
    spec_.quality_min = 0;
    spec_.quality_max = 100;
    spec_.extension = ".raw";
    spec_.colorspace = "rgb";
  }
  const CodecAdapter& spec() const override { return spec_; }

  EncodeResult encode_decode(const Tensor& image, int quality) const override {
    check_quality(quality);
    EncodeResult r;
    r.decoded = image;  // exact passthrough
    r.compressed_bytes = uint64_t(image.h()) * image.w() * 3;
    r.bpp = 24.0;
    return r;
  }

 private:
  CodecAdapter spec_;
};

class SubprocessCodec final : public Codec {
 public:
  explicit SubprocessCodec(CodecAdapter adapter) : spec_(std::move(adapter)) {
    // argv0 of the encode command, for the availability probe.
    std::string head = spec_.encode_tpl.substr(0, spec_.encode_tpl.find(' '));
    available_ = !head.empty() &&
                 (fs::exists(head) ||
                  system(("command -v " + head + " >/dev/null 2>&1").c_str()) == 0);
  }

  const CodecAdapter& spec() const override { return spec_; }
  bool available() const override { return available_; }

  EncodeResult encode_decode(const Tensor& image, int quality) const override {
    check_quality(quality);
    if (!available_)
      throw AdapterError("codec '" + spec_.name + "' binary not found");
    const fs::path in_png = unique_temp(spec_.name + "_in", ".png");
    const fs::path packed = unique_temp(spec_.name + "_enc", spec_.extension);
    const fs::path out_png = unique_temp(spec_.name + "_out", ".png");
    struct Cleanup {
      std::vector<fs::path> paths;
      ~Cleanup() {
        std::error_code ec;
        for (const auto& p : paths) fs::remove(p, ec);
      }
    } cleanup{{in_png, packed, out_png}};

    save_image(tensor_to_u8(image), in_png.string());
    std::string enc = substitute(spec_.encode_tpl, "{input}", in_png.string());
    enc = substitute(enc, "{output}", packed.string());
    enc = substitute(enc, "{quality}", std::to_string(quality));
    run_command(enc, "codec '" + spec_.name + "' encode");
    if (!fs::exists(packed))
      throw AdapterError("codec '" + spec_.name + "' produced no output file");

    EncodeResult r;
    r.compressed_bytes = fs::file_size(packed);
    r.bpp = 8.0 * double(r.compressed_bytes) / (double(image.h()) * image.w());

    std::string dec = substitute(spec_.decode_tpl, "{input}", packed.string());
    dec = substitute(dec, "{output}", out_png.string());
    dec = substitute(dec, "{quality}", std::to_string(quality));
    run_command(dec, "codec '" + spec_.name + "' decode");
    ImageU8 decoded = load_image(out_png.string());
    if (decoded.h != image.h() || decoded.w != image.w())
      throw AdapterError("codec '" + spec_.name + "' changed dimensions");
    r.decoded = u8_to_tensor(decoded);
    return r;
  }

 private:
  CodecAdapter spec_;
  bool available_ = false;
};

}  // namespace

void Codec::check_quality(int quality) const {
  const CodecAdapter& s = spec();
  if (quality < s.quality_min || quality > s.quality_max)
    throw std::invalid_argument("codec '" + s.name + "': quality " +
                                std::to_string(quality) + " outside [" +
                                std::to_string(s.quality_min) + ", " +
                                std::to_string(s.quality_max) + "]");
}

std::unique_ptr<Codec> make_jpeg_codec() { return std::make_unique<JpegCodec>(); }
std::unique_ptr<Codec> make_identity_codec() {
  return std::make_unique<IdentityCodec>();
}
std::unique_ptr<Codec> make_subprocess_codec(CodecAdapter adapter) {
  return std::make_unique<SubprocessCodec>(std::move(adapter));
}

CodecAdapter parse_adapter_json(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  CodecAdapter a;
  a.name = j.at("name").get<std::string>();
  a.encode_tpl = j.at("encode").get<std::string>();
  a.decode_tpl = j.at("decode").get<std::string>();
  a.quality_min = j.at("quality_min").get<int>();
  a.quality_max = j.at("quality_max").get<int>();
  a.quality_ascending = j.value("quality_ascending", true);
  a.extension = j.at("extension").get<std::string>();
  a.colorspace = j.value("colorspace", "ycbcr");
  if (a.quality_min > a.quality_max)
    throw std::invalid_argument("adapter '" + a.name + "': empty quality range");
  for (const char* ph : {"{input}", "{output}"}) {
    if (a.encode_tpl.find(ph) == std::string::npos ||
        a.decode_tpl.find(ph) == std::string::npos)
      throw std::invalid_argument("adapter '" + a.name +
                                  "': command templates must use " + ph);
  }
  return a;
}

CodecRegistry::CodecRegistry() {
  add(make_jpeg_codec());
  add(make_identity_codec());
}

void CodecRegistry::add(std::unique_ptr<Codec> codec) {
  codecs_.push_back(std::move(codec));
}

void CodecRegistry::load_adapter_dir(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    std::ifstream in(f);
    const std::string text{std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>()};
    add(make_subprocess_codec(parse_adapter_json(text)));
  }
}

const Codec& CodecRegistry::get(const std::string& name) const {
  for (const auto& c : codecs_)
    if (c->spec().name == name) return *c;
  throw AdapterError("unknown codec '" + name + "'");
}

bool CodecRegistry::has(const std::string& name) const {
  for (const auto& c : codecs_)
    if (c->spec().name == name) return true;
  return false;
}

std::vector<std::string> CodecRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& c : codecs_) out.push_back(c->spec().name);
  return out;
}

Tensor rgb_to_ycbcr(const Tensor& rgb) {
  Tensor out(rgb.shape());
  for (int64_t p = 0; p < rgb.size(); p += 3) {
    const double r = rgb[p], g = rgb[p + 1], b = rgb[p + 2];
    const double y = 0.299 * r + 0.587 * g + 0.114 * b;
    out[p] = y;
    out[p + 1] = 0.5 + (b - y) / 1.772;
    out[p + 2] = 0.5 + (r - y) / 1.402;
  }
  return out;
}

Tensor ycbcr_to_rgb(const Tensor& ycbcr) {
  Tensor out(ycbcr.shape());
  for (int64_t p = 0; p < ycbcr.size(); p += 3) {
    const double y = ycbcr[p];
    const double cb = ycbcr[p + 1] - 0.5;
    const double cr = ycbcr[p + 2] - 0.5;
    out[p] = y + 1.402 * cr;
    out[p + 1] = y - (0.299 * 1.402 / 0.587) * cr - (0.114 * 1.772 / 0.587) * cb;
    out[p + 2] = y + 1.772 * cb;
  }
  return out;
}

Var straight_through_decode(Tape& t, Var filtered, const Codec& codec,
                            int quality, EncodeResult* info) {
  EncodeResult r = codec.encode_decode(filtered->value, quality);
  if (info) *info = r;
  return ops::straight_through(t, filtered, std::move(r.decoded));
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::kMsSsim:
      return "ms_ssim";
    case Metric::kMse:
      return "mse";
    case Metric::kPsnr:
      return "psnr";
  }
  return "?";
}

Metric metric_from_string(const std::string& s) {
  if (s == "ms_ssim" || s == "msssim") return Metric::kMsSsim;
  if (s == "mse") return Metric::kMse;
  if (s == "psnr") return Metric::kPsnr;
  throw std::invalid_argument("unknown metric: " + s);
}

bool metric_better(Metric m, double a, double b) {
  return m == Metric::kMse ? a < b : a > b;
}

double compute_metric(Metric m, const Tensor& reference, const Tensor& test) {
  switch (m) {
    case Metric::kMsSsim:
      return ms_ssim(reference, test);
    case Metric::kMse:
      return mse(reference, test);
    case Metric::kPsnr: {
      const double e = mse(reference, test);
      return e <= 0 ? 99.0 : 10.0 * std::log10(1.0 / e);
    }
  }
  throw std::logic_error("bad metric");
}

void prune_dominated(RDCurve& curve) {
  std::sort(curve.points.begin(), curve.points.end(),
            [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
  std::vector<RDPoint> kept;
  for (const RDPoint& p : curve.points) {
    if (!kept.empty() && p.bpp <= kept.back().bpp) continue;
    if (!kept.empty() && !metric_better(curve.metric, p.value, kept.back().value))
      continue;
    kept.push_back(p);
  }
  curve.points = std::move(kept);
}

RDCurve quality_sweep(const Tensor& image, const Codec& codec,
                      const std::vector<int>& qualities, Metric metric) {
  if (qualities.empty())
    throw std::invalid_argument("quality_sweep: empty quality list");
  RDCurve curve;
  curve.codec = codec.spec().name;
  curve.metric = metric;
  for (int q : qualities) {
    EncodeResult r = codec.encode_decode(image, q);
    curve.points.push_back({r.bpp, compute_metric(metric, image, r.decoded), q});
  }
  prune_dominated(curve);
  return curve;
}

}  // namespace prefilter
