// Writes a DGP1 panel sample in the CSV layout read by `drdid estimate`.

#include <cstdio>
#include <fstream>
#include <iostream>

#include "drdid/drdid.hpp"

int main(int argc, char** argv) {
  using namespace drdid;
  if (argc != 2) {
    std::cerr << "usage: write_panel_csv OUT.csv\n";
    return 2;
  }
  DgpSpec spec;
  spec.n = 1000;
  spec.seed = 3;
  RngStream rng(spec.seed, 0, stream::data);
  const PanelDataset p = gen_dgp_panel(spec, rng);
  std::ofstream out(argv[1]);
  out << "id,y0,y1,d,x1,x2,x3,x4\n";
  out.precision(17);
  for (std::size_t i = 0; i < p.n(); ++i) {
    out << i + 1 << ',' << p.y0[i] << ',' << p.y1[i] << ',' << p.d[i];
    for (std::size_t j = 1; j < p.k(); ++j) out << ',' << p.x(i, j);
    out << '\n';
  }
}
