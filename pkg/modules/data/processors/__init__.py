# Proposal simulation and descriptors
