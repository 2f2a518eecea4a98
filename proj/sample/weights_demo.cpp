/*
   Copyright 2026 The ml2rgodic Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

// Prints the Richardson-Romberg weights for uniform and custom resizers.

#include <cstdio>

#include <ml2rgodic/weights.hpp>

namespace {

void show(const ml2rgodic::WeightSet &ws) {
    std::printf("R=%d M=%d a=%.4f  q =", ws.R, ws.M, ws.a);
    for (double v : ws.q) std::printf(" %.3f", v);
    std::printf("\n  W  =");
    for (double v : ws.W) std::printf(" %+.6f", v);
    std::printf("\n  W~_{R+1} = %+.6g  W~_{R+2} = %+.6g  residual %.2e  psi %.4f\n", ws.Wt1, ws.Wt2,
                ml2rgodic::system_residual(ws), ml2rgodic::psi(ws));
}

} // namespace

int main() {
    using namespace ml2rgodic;
    for (int M : {2, 3})
        for (int R : {2, 3, 4}) show(solve_uniform(R, M, 1.0 / (2 * R + 1)));
    show(solve_general(3, 2, 1.0 / 7, {0.5, 0.3, 0.2}));
    for (int M : {2, 3, 4}) std::printf("sup_R psi/R for M=%d: %.4f\n", M, psi_bold(M));
}
