#include "jumplim/harness/cli.hpp"

int main(int argc, char** argv) {
    return jumplim::cli_main(argc, argv);
}
