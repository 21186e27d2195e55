#include <vector>

#include "alignkit/cli.h"

int main(int argc, char** argv) {
    return alignkit::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
