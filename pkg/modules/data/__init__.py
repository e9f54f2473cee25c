# Synthetic scenes, rasterizer, dataset IO
