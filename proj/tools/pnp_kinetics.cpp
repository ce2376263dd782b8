#include "pnpk/harness/cli.hpp"

int main(int argc, char** argv) {
    return pnpk::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
