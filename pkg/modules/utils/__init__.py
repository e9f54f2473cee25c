# Config, checkpoints, boxes, errors
