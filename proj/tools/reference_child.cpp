// Reference external classifier speaking the line-delimited JSON protocol.
// Predicts y = 1[x0 >= 0]. The --mode flag switches in deliberate protocol
// violations used by the failure-mode tests:
//   normal     well-behaved classifier
//   malformed  first reply to a predict is not JSON
//   wrong-id   replies carry a bogus id
//   die        exits as soon as the first predict arrives
//   sleep      stalls before every reply (for timeout tests)
//   no-ready   answers the handshake with garbage

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

using nlohmann::json;

namespace {

int predict(const std::vector<double>& x) {
  return !x.empty() && x[0] >= 0.0 ? 1 : 0;
}

void reply(const json& j) {
  std::cout << j.dump() << "\n" << std::flush;
}

}  // namespace

int main(int argc, char** argv) {
  std::string mode = "normal";
  int n_features = 4;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--mode" && i + 1 < argc) {
      mode = argv[++i];
    } else if (arg == "--dim" && i + 1 < argc) {
      n_features = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "reference_child: unknown argument %s\n",
                   arg.c_str());
      return 2;
    }
  }

  std::string line;
  bool first_predict = true;
  while (std::getline(std::cin, line)) {
    if (line.empty()) continue;
    json msg;
    try {
      msg = json::parse(line);
    } catch (const json::parse_error&) {
      std::fprintf(stderr, "reference_child: bad input line\n");
      return 2;
    }
    const std::string type = msg.value("type", "");

    if (type == "hello") {
      if (mode == "no-ready") {
        std::cout << "hello yourself\n" << std::flush;
        continue;
      }
      reply({{"type", "ready"},
             {"n_features", n_features},
             {"labels", {0, 1}}});
      continue;
    }
    if (type == "bye") break;

    if (mode == "sleep") std::this_thread::sleep_for(std::chrono::seconds(5));

    if (type == "predict") {
      if (mode == "die") return 1;
      if (mode == "malformed" && first_predict) {
        first_predict = false;
        std::cout << "this is not json\n" << std::flush;
        continue;
      }
      const auto x = msg.at("x").get<std::vector<double>>();
      const auto id = msg.at("id");
      reply({{"type", "prediction"},
             {"id", mode == "wrong-id" ? json(999999) : id},
             {"y", predict(x)}});
    } else if (type == "predict_batch") {
      if (mode == "die") return 1;
      const auto xs = msg.at("xs").get<std::vector<std::vector<double>>>();
      std::vector<int> ys;
      ys.reserve(xs.size());
      for (const auto& x : xs) ys.push_back(predict(x));
      reply({{"type", "predictions"},
             {"id", mode == "wrong-id" ? json(999999) : msg.at("id")},
             {"ys", ys}});
    } else {
      std::fprintf(stderr, "reference_child: unknown message type %s\n",
                   type.c_str());
      return 2;
    }
  }
  return 0;
}
