// Copyright 2026 The fss Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Writes a synthetic blob world as PNG images plus a COCO-format annotation file.
#include <iostream>

#include "CLI11.hpp"

#include "fss/error.hpp"
#include "fss/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"synthetic fixture generator"};
  std::string out;
  fss::SyntheticOptions o;
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--seed", o.seed, "generator seed");
  app.add_option("--classes", o.num_classes, "number of classes");
  app.add_option("--images", o.num_images, "number of images");
  app.add_flag("--overlapping", o.overlapping, "place blobs straddling each other");
  CLI11_PARSE(app, argc, argv);
  try {
    fss::write_world(fss::make_world(o), out);
  } catch (const fss::Error& e) {
    std::cerr << e.what() << "\n";
    return 3;
  }
  return 0;
}
