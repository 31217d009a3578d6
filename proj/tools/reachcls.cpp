#include "reachcls/app.hpp"

int main(int argc, char** argv) { return reachcls::run_cli(argc, argv); }
