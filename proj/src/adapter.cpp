// SPDX-License-Identifier: Apache-2.0
#include <cerrno>
#include <cstring>
#include <mutex>

#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "langfield/binary_io.hpp"
#include "langfield/pipeline.hpp"

namespace langfield {

using nlohmann::json;

namespace {

constexpr int kProtocol = 1;

std::string rgb_b64(const RgbImage& frame) { return base64_encode(frame.data); }

}  // namespace

std::string encode_mask_b64(const Mask& mask) { return base64_encode(mask.bits); }

Mask decode_mask_b64(const std::string& b64, int width, int height) {
  Mask m(width, height);
  auto bytes = base64_decode(b64);
  if (bytes.size() != m.bits.size()) throw FormatError("adapter mask has the wrong number of pixels");
  for (auto& b : bytes) b = b != 0;
  m.bits = std::move(bytes);
  return m;
}

AdapterProcess::AdapterProcess(std::vector<std::string> argv) {
  if (argv.empty()) throw InvalidArgument("adapter: empty command");
  int fds[2];
  if (socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) throw Error(std::string("adapter: socketpair: ") + std::strerror(errno));
  pid_ = fork();
  if (pid_ < 0) {
    close(fds[0]);
    close(fds[1]);
    throw Error(std::string("adapter: fork: ") + std::strerror(errno));
  }
  if (pid_ == 0) {
    dup2(fds[1], STDIN_FILENO);
    dup2(fds[1], STDOUT_FILENO);
    close(fds[0]);
    close(fds[1]);
    std::vector<char*> args;
    for (auto& a : argv) args.push_back(a.data());
    args.push_back(nullptr);
    execvp(args[0], args.data());
    _exit(127);
  }
  close(fds[1]);
  to_child_ = from_child_ = fds[0];

  std::string reply;
  try {
    reply = request(json{{"op", "hello"}, {"protocol", kProtocol}}.dump());
    const json j = json::parse(reply);
    if (j.value("protocol", -1) != kProtocol) throw Error("protocol mismatch");
    dim_ = j.at("dim").get<int>();
    if (dim_ < 1) throw Error("non-positive feature dimension");
  } catch (const std::exception& e) {
    throw Error(std::string("adapter handshake failed: ") + e.what());
  }
}

AdapterProcess::~AdapterProcess() {
  if (to_child_ >= 0) close(to_child_);
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
  }
}

std::string AdapterProcess::request(const std::string& json_line) {
  std::string out = json_line + "\n";
  for (std::size_t sent = 0; sent < out.size();) {
    const ssize_t n = send(to_child_, out.data() + sent, out.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(std::string("adapter: write failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
  std::size_t nl;
  while ((nl = buffer_.find('\n')) == std::string::npos) {
    char chunk[65536];
    const ssize_t n = read(from_child_, chunk, sizeof chunk);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw Error("adapter: process closed the connection");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
  std::string line = buffer_.substr(0, nl);
  buffer_.erase(0, nl + 1);
  const json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) throw FormatError("adapter: response is not JSON");
  if (j.contains("error")) throw Error("adapter: " + j["error"].get<std::string>());
  return line;
}

namespace {

struct Channel {
  AdapterProcess process;
  std::mutex mutex;

  explicit Channel(std::vector<std::string> argv) : process(std::move(argv)) {}
  json call(const json& req) {
    std::scoped_lock lock(mutex);
    return json::parse(process.request(req.dump()));
  }
};

json frame_fields(int t, const RgbImage& frame) {
  return {{"frame", t}, {"width", frame.width}, {"height", frame.height}, {"rgb", rgb_b64(frame)}};
}

class AdapterGenerator : public MaskGenerator {
 public:
  explicit AdapterGenerator(std::shared_ptr<Channel> ch) : ch_(std::move(ch)) {}
  std::vector<Mask> generate(int t, const RgbImage& frame) override {
    json req = frame_fields(t, frame);
    req["op"] = "generate";
    std::vector<Mask> out;
    const json reply = ch_->call(req);
    for (const auto& m : reply.at("masks")) out.push_back(decode_mask_b64(m.get<std::string>(), frame.width, frame.height));
    return out;
  }

 private:
  std::shared_ptr<Channel> ch_;
};

class AdapterPropagator : public MaskPropagator {
 public:
  explicit AdapterPropagator(std::shared_ptr<Channel> ch) : ch_(std::move(ch)) {}
  void start(int t, const RgbImage& frame, const std::vector<ObjectMask>& objects) override {
    json req = frame_fields(t, frame);
    req["op"] = "start";
    req["objects"] = json::array();
    for (const auto& o : objects) req["objects"].push_back({{"id", o.id}, {"mask", encode_mask_b64(o.mask)}});
    ch_->call(req);
  }
  std::vector<ObjectMask> track(int t, const RgbImage& frame) override {
    json req = frame_fields(t, frame);
    req["op"] = "track";
    std::vector<ObjectMask> out;
    const json reply = ch_->call(req);
    for (const auto& o : reply.at("objects")) {
      out.push_back({o.at("id").get<std::uint32_t>(), decode_mask_b64(o.at("mask").get<std::string>(), frame.width, frame.height)});
    }
    return out;
  }

 private:
  std::shared_ptr<Channel> ch_;
};

class AdapterEmbedder : public PixelEmbedder {
 public:
  explicit AdapterEmbedder(std::shared_ptr<Channel> ch) : ch_(std::move(ch)) {}
  [[nodiscard]] int dim() const override { return ch_->process.dim(); }
  std::vector<float> embed(const RgbImage& frame, const Mask& mask) override {
    json req = frame_fields(0, frame);
    req["op"] = "embed";
    req["mask"] = encode_mask_b64(mask);
    return ch_->call(req).at("feature").get<std::vector<float>>();
  }

 private:
  std::shared_ptr<Channel> ch_;
};

}  // namespace

ComponentSuite adapter_suite(std::vector<std::string> argv) {
  auto ch = std::make_shared<Channel>(std::move(argv));
  return {std::make_shared<AdapterGenerator>(ch), std::make_shared<AdapterPropagator>(ch),
          std::make_shared<AdapterEmbedder>(ch)};
}

}  // namespace langfield
