// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

// Placeholder main; subcommands land after the model stack is tested.
int main() { return 0; }
