# Evaluation, ablation tables, attention renders
