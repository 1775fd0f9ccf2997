// Copyright (c) 2026 The marblevad Authors
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

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace marblevad {

// Class index doubles as the classifier output index.
enum class Label { kNonSpeech = 0, kSpeech = 1 };

enum class Condition { kClean, kNoise, kMusic, kNoSpeech };

inline std::string_view to_string(Label l) {
  return l == Label::kSpeech ? "speech" : "non_speech";
}

inline Label parse_label(std::string_view s) {
  if (s == "speech") return Label::kSpeech;
  if (s == "non_speech") return Label::kNonSpeech;
  throw std::invalid_argument("unknown label '" + std::string(s) +
                              "' (expected speech or non_speech)");
}

inline std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::kClean:
      return "clean";
    case Condition::kNoise:
      return "noise";
    case Condition::kMusic:
      return "music";
    case Condition::kNoSpeech:
      return "no_speech";
  }
  return "?";
}

inline Condition parse_condition(std::string_view s) {
  if (s == "clean") return Condition::kClean;
  if (s == "noise" || s == "+noise") return Condition::kNoise;
  if (s == "music" || s == "+music") return Condition::kMusic;
  if (s == "no_speech" || s == "non_speech") return Condition::kNoSpeech;
  throw std::invalid_argument("unknown condition '" + std::string(s) + "'");
}

inline bool is_speech(Condition c) { return c != Condition::kNoSpeech; }

// Ground-truth interval of one recording, [start_s, end_s).
struct LabeledInterval {
  double start_s = 0.0;
  double end_s = 0.0;
  Condition condition = Condition::kNoSpeech;
};

}  // namespace marblevad
