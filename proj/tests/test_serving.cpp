#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <gtest/gtest.h>
#include <json.hpp>

#include "exerclass/errors.hpp"
#include "exerclass/server.hpp"
#include "exerclass/session.hpp"
#include "exerclass/synthgen.hpp"
#include "support/oracles.hpp"

namespace exerclass {
namespace {

using nlohmann::json;

std::shared_ptr<const LoadedModel> small_model(int max_seq_len = 32) {
  auto m = std::make_shared<LoadedModel>();
  m->config.lstm_units = {8, 8};
  m->config.max_seq_len = max_seq_len;
  m->params = init_params(m->config, 5);
  return m;
}

std::vector<LandmarkFrame> frames(int n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::vector<LandmarkFrame> out;
  for (int i = 0; i < n; ++i) out.push_back(testing::random_frame(gen));
  return out;
}

json frame_message(const LandmarkFrame& f, std::uint64_t seq_no) {
  json pts = json::array();
  for (const auto& p : f.points) pts.push_back({p.x, p.y, p.z, p.visibility});
  return {{"type", "frame"}, {"seq_no", seq_no}, {"landmarks", pts}};
}

TEST(Session, WindowFillsThenSlides) {
  Session s(small_model());
  const auto fs = frames(10, 1);
  ClassificationResult r;
  for (int i = 0; i < 3; ++i) r = s.push_frame(fs[static_cast<std::size_t>(i)]);
  EXPECT_EQ(r.window_fill, 3);
  for (int i = 3; i < 10; ++i) r = s.push_frame(fs[static_cast<std::size_t>(i)]);
  EXPECT_EQ(r.window_fill, 8);
  ASSERT_EQ(s.window().size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(s.window()[i], fs[i + 2]);
}

TEST(Session, PaddingFrameOccupiesASlot) {
  Session s(small_model());
  for (const auto& f : frames(8, 2)) s.push_frame(f);
  std::vector<float> raw(kFrameFeatures, std::numeric_limits<float>::quiet_NaN());
  const auto r = s.push_frame(std::span<const float>(raw));
  EXPECT_EQ(r.window_fill, 7);
  EXPECT_EQ(s.frames_dropped(), 1u);
  EXPECT_TRUE(s.window().back().is_padding);
}

TEST(Session, ResetEmptiesWindow) {
  Session s(small_model());
  for (const auto& f : frames(6, 3)) s.push_frame(f);
  s.reset();
  EXPECT_EQ(s.push_frame(frames(1, 4)[0]).window_fill, 1);
}

TEST(Session, WrongSizedPayloadLeavesWindowAlone) {
  Session s(small_model());
  s.push_frame(frames(1, 5)[0]);
  std::vector<float> raw(32 * 4, 0.1f);
  EXPECT_THROW(s.push_frame(std::span<const float>(raw)), MalformedInput);
  EXPECT_EQ(s.window().size(), 1u);
}

TEST(Session, MatchesOfflineClassificationOfWindow) {
  const auto model = small_model();
  Session s(model);
  const auto fs = frames(200, 6);
  std::mt19937_64 gen(60);
  std::vector<LandmarkFrame> pushed;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    auto f = fs[i];
    if (gen() % 17 == 0) f = LandmarkFrame::padding();
    pushed.push_back(f);
    const auto r = s.push_frame(f);
    const std::size_t lo = pushed.size() > 8 ? pushed.size() - 8 : 0;
    PoseSequence seq;
    seq.frames.assign(pushed.begin() + static_cast<std::ptrdiff_t>(lo), pushed.end());
    seq.frames.resize(32, LandmarkFrame::padding());
    const auto offline = classify(seq, model->params, model->config);
    ASSERT_EQ(r.probs.size(), offline.probabilities.probs.size());
    for (std::size_t c = 0; c < r.probs.size(); ++c) EXPECT_EQ(r.probs[c], offline.probabilities.probs[c]);
    EXPECT_EQ(r.label, offline.probabilities.argmax);
  }
}

TEST(Session, WindowBoundsChecked) {
  EXPECT_THROW(Session(small_model(), 0), ConfigError);
  EXPECT_THROW(Session(small_model(16), 17), ConfigError);
  EXPECT_NO_THROW(Session(small_model(16), 16));
  EXPECT_THROW(Session(nullptr), ConfigError);
}

TEST(Protocol, FrameGetsClassification) {
  ProtocolSession p(small_model());
  const auto reply = p.handle(frame_message(frames(1, 7)[0], 41).dump());
  ASSERT_TRUE(reply);
  const auto j = json::parse(*reply);
  EXPECT_EQ(j["type"], "classification");
  EXPECT_EQ(j["seq_no"], 41);
  EXPECT_EQ(j["window_fill"], 1);
  double sum = 0.0;
  const ClassRegistry registry;
  for (const auto& name : registry.names()) sum += j["probs"][name].get<double>();
  EXPECT_NEAR(sum, 1.0, 1e-5);
  EXPECT_TRUE(j["probs"].contains(j["label"].get<std::string>()));
}

TEST(Protocol, ResetHasNoReply) {
  ProtocolSession p(small_model());
  p.handle(frame_message(frames(1, 8)[0], 1).dump());
  EXPECT_FALSE(p.handle(R"({"type":"reset"})"));
  EXPECT_EQ(p.session().window().size(), 0u);
}

TEST(Protocol, ErrorsKeepConnectionUsable) {
  ProtocolSession p(small_model());
  auto err = json::parse(*p.handle("{not json"));
  EXPECT_EQ(err["type"], "error");
  EXPECT_FALSE(err.contains("seq_no"));

  auto msg = frame_message(frames(1, 9)[0], 5);
  msg["landmarks"].erase(0);
  err = json::parse(*p.handle(msg.dump()));
  EXPECT_EQ(err["type"], "error");
  EXPECT_EQ(err["seq_no"], 5);
  EXPECT_NE(err["reason"].get<std::string>().find("33"), std::string::npos);

  err = json::parse(*p.handle(R"({"type":"hello"})"));
  EXPECT_EQ(err["type"], "error");
  err = json::parse(*p.handle(R"({"type":"frame","landmarks":[]})"));
  EXPECT_EQ(err["type"], "error");
  EXPECT_EQ(p.session().window().size(), 0u);

  const auto ok = json::parse(*p.handle(frame_message(frames(1, 9)[0], 6).dump()));
  EXPECT_EQ(ok["type"], "classification");
}

TEST(Protocol, NaNAndNullMarkLostFrames) {
  ProtocolSession p(small_model());
  for (const char* missing : {"\"NaN\"", "null"}) {
    std::string pts = "[";
    for (int i = 0; i < 33; ++i) pts += std::string(i ? "," : "") + "[" + missing + ",0.5,0.1,0.9]";
    pts += "]";
    const auto reply = json::parse(*p.handle(R"({"type":"frame","seq_no":3,"landmarks":)" + pts + "}"));
    EXPECT_EQ(reply["type"], "classification");
    EXPECT_EQ(reply["window_fill"], 0);
  }
}

namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;

class Client {
 public:
  explicit Client(unsigned short port) : ws_(ioc_) {
    tcp::resolver resolver(ioc_);
    boost::asio::connect(ws_.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
    ws_.handshake("127.0.0.1", "/");
  }
  void send(const std::string& text) { ws_.write(boost::asio::buffer(text)); }
  json receive() {
    beast::flat_buffer buf;
    ws_.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  }
  void close() { ws_.close(websocket::close_code::normal); }

 private:
  boost::asio::io_context ioc_;
  websocket::stream<tcp::socket> ws_;
};

TEST(Server, ConcurrentClientsHaveIndependentWindows) {
  const auto model = small_model();
  const std::string log_path = ::testing::TempDir() + "exerclass_server_log.jsonl";
  std::remove(log_path.c_str());
  ServerOptions opts;
  opts.port = 0;
  opts.log_path = log_path;
  Server server(model, opts);
  server.start();

  Client a(server.port()), b(server.port());
  const auto fa = frames(12, 10), fb = frames(3, 11);
  Session ref_a(model), ref_b(model);
  for (std::size_t i = 0; i < fa.size(); ++i) {
    a.send(frame_message(fa[i], i).dump());
    if (i < fb.size()) b.send(frame_message(fb[i], 100 + i).dump());
    const auto ra = a.receive();
    const auto want = ref_a.push_frame(fa[i]);
    EXPECT_EQ(ra["seq_no"], i);
    EXPECT_EQ(ra["window_fill"], want.window_fill);
    if (i < fb.size()) {
      const auto rb = b.receive();
      EXPECT_EQ(rb["seq_no"], 100 + i);
      EXPECT_EQ(rb["window_fill"], ref_b.push_frame(fb[i]).window_fill);
    }
  }
  a.send(R"({"type":"reset"})");
  a.send(frame_message(fa[0], 999).dump());
  EXPECT_EQ(a.receive()["window_fill"], 1);
  b.send("garbage");
  EXPECT_EQ(b.receive()["type"], "error");
  a.close();
  b.close();
  server.stop();

  std::ifstream log(log_path);
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto j = json::parse(line);
    EXPECT_TRUE(j.contains("time"));
    EXPECT_TRUE(j.contains("session"));
    EXPECT_EQ(j["classification"]["type"], "classification");
    ++lines;
  }
  EXPECT_EQ(lines, 12 + 3 + 1);
}

TEST(Server, StopWithOpenConnection) {
  Server server(small_model(), ServerOptions{"127.0.0.1", 0, 8, ""});
  server.start();
  Client c(server.port());
  c.send(frame_message(frames(1, 12)[0], 0).dump());
  c.receive();
  const auto t0 = std::chrono::steady_clock::now();
  server.stop();
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(5));
}

}  // namespace
}  // namespace exerclass
