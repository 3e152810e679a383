import os

import colorcet as cc
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import seaborn as sns  # noqa: E402
from PIL import Image  # noqa: E402
from scipy.spatial.distance import cdist  # noqa: E402
from sklearn.manifold import TSNE  # noqa: E402

from reranksearch.index import Metric  # noqa: E402

fig_width_pixels = 800
fig_height_pixels = 800
dpi = 100

_SCIPY_METRICS = {Metric.cosine: "cosine", Metric.l2: "euclidean"}


def get_colors(N):
    colors = []
    step = 256 / max(N, 1)
    for i in range(N):
        index = int(i * step)
        colors.append(cc.rainbow[index])
    return colors


def add_text(plt, text_dict):
    num_keys = len(text_dict)
    y_decrement = 0.02

    # Adjust the bottom of the subplot based on the number of keys
    plt.subplots_adjust(bottom=0.1 + num_keys * y_decrement)

    initial_y = 0.05 + y_decrement * (num_keys - 1)

    for i, (key, value) in enumerate(text_dict.items()):
        y_position = initial_y - i * y_decrement
        plt.text(0.05, y_position, f'{key}: {value}',
                 transform=plt.gcf().transFigure)


def _new_figure():
    return plt.figure(figsize=(fig_width_pixels / dpi,
                      fig_height_pixels / dpi), dpi=dpi)


def plot_k_sweep(report, save_path="k_sweep.png", title="", text_dict=None):
    """
    Plot mean precision@N against shortlist size, one line per mode.

    Args:
        report (EvalReport): A report produced with `k_values`.
        save_path (str): The path to save the plot to.

    Returns:
        save_path (str): The path to the saved plot.
    """
    sweep = report.k_sweep
    if not sweep:
        raise ValueError("Report has no k sweep")
    fig = _new_figure()

    modes = sorted({mode for _, mode, _ in sweep}, key=lambda m: m.value)
    colors = get_colors(len(modes))
    for i, mode in enumerate(modes):
        points = [(k, mean) for k, m, mean in sweep if m is mode]
        plt.plot([k for k, _ in points], [mean for _, mean in points], 'o-',
                 color=colors[i], label=mode.value)

    if text_dict is not None:
        add_text(plt, text_dict)

    plt.xlabel('Shortlist size (k)')
    plt.ylabel(f'Mean precision@{report.top_n}')
    plt.title(title or 'Precision vs Shortlist Size')
    plt.ylim(0, 1.05)
    plt.legend()
    plt.savefig(save_path, bbox_inches='tight', pad_inches=0)
    plt.close(fig)
    return save_path


def plot_latency_histogram(report, save_path="latency.png"):
    """
    Histogram of per-query stage latencies across all evaluated modes.

    Returns:
        save_path (str): The path to the saved plot.
    """
    stages = {
        "embed": [row.timings.embed_ms for row in report.per_query],
        "search": [row.timings.search_ms for row in report.per_query],
        "rerank": [row.timings.rerank_ms for row in report.per_query
                   if row.timings.rerank_ms is not None],
    }
    stages = {name: values for name, values in stages.items() if values}
    fig = _new_figure()

    colors = get_colors(len(stages))
    for i, (name, values) in enumerate(stages.items()):
        plt.hist(values, bins=30, alpha=0.6, color=colors[i], label=name)
    plt.title('Distribution of Stage Latencies')
    plt.xlabel('Milliseconds')
    plt.ylabel('Frequency')
    plt.legend()

    plt.savefig(save_path, bbox_inches='tight', pad_inches=0)
    plt.close(fig)
    return save_path


def similarity_matrix(index):
    """
    Pairwise similarity of every stored vector, using the index metric.

    Returns:
        numpy.ndarray: `(n, n)` matrix, higher meaning more similar.
    """
    vectors = index.vectors.astype(np.float64)
    if index.metric is Metric.dot:
        return vectors @ vectors.T
    distances = cdist(vectors, vectors, metric=_SCIPY_METRICS[index.metric])
    return 1.0 - distances if index.metric is Metric.cosine else -distances


def plot_similarity_heatmap(index, cmap="Blues", save_path="heatmap.png"):
    """
    Heatmap of pairwise corpus similarity.

    Returns:
        save_path (str): The path to the saved plot.
    """
    fig = _new_figure()

    labels = list(index.ids) if len(index) <= 50 else False
    sns.heatmap(similarity_matrix(index), cmap=cmap,
                xticklabels=labels, yticklabels=labels)
    plt.title(f'Pairwise {index.metric.name} similarity')
    plt.xlabel('Record')
    plt.ylabel('Record')

    plt.savefig(save_path, bbox_inches='tight', pad_inches=0)
    plt.close(fig)
    return save_path


def plot_embeddings(index, save_path="embeddings.png", highlight_ids=None,
                    text_dict=None):
    """
    Plot the index vectors in 2D with t-SNE.

    Args:
        index (FlatIndex): Index whose vectors are projected.
        save_path (str): The path to save the plot to.
        highlight_ids (list): Record ids drawn with a cross and labelled,
            e.g. the results of a query.

    Returns:
        save_path (str): The path to the saved plot.
    """
    n = len(index)
    if n < 2:
        raise ValueError("Need at least two vectors to project")
    fig = _new_figure()

    perplexity = min(30.0, max(1.0, (n - 1) / 3))
    tsne = TSNE(n_components=2, random_state=42, perplexity=perplexity)
    embeddings_2d = tsne.fit_transform(index.vectors)

    plt.scatter(embeddings_2d[:, 0], embeddings_2d[:, 1], marker='.',
                color=get_colors(1)[0])
    position = {record_id: i for i, record_id in enumerate(index.ids)}
    for record_id in highlight_ids or ():
        if record_id in position:
            x, y = embeddings_2d[position[record_id]]
            plt.scatter(x, y, marker='x', color='black')
            plt.annotate(record_id, (x, y))

    plt.xlabel('Dimension 1')
    plt.ylabel('Dimension 2')
    plt.title('Embeddings in 2D Space')

    if text_dict is not None:
        add_text(plt, text_dict)

    plt.savefig(save_path, bbox_inches='tight', pad_inches=0)
    plt.close(fig)
    return save_path


def concatenate_images(image_paths, grid_size, save_path="dashboard.png"):
    """
    Concatenate a list of images into a grid.

    Args:
        image_paths (list): A list of image paths.
        grid_size (tuple): A tuple of the number of rows and columns in the grid.
        save_path (str): The path to save the concatenated image to.

    Returns:
        save_path (str): The path to the saved image.
    """
    grid_rows, grid_cols = grid_size
    if len(image_paths) > grid_rows * grid_cols:
        raise ValueError("Grid is too small for the images")

    images = [Image.open(path) for path in image_paths]
    image_width = max(image.size[0] for image in images)
    image_height = max(image.size[1] for image in images)

    grid = Image.new('RGB', (image_width * grid_cols, image_height * grid_rows),
                     'white')
    for i, image in enumerate(images):
        row = i // grid_cols
        col = i % grid_cols
        grid.paste(image, (col * image_width, row * image_height))
        image.close()

    grid.save(save_path)
    return save_path


def plot_report(report, index, out_dir):
    """
    Writes every evaluation plot into `out_dir` plus a combined dashboard.

    Returns:
        list: Paths of the written images, dashboard last.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    if report.k_sweep:
        paths.append(plot_k_sweep(report, os.path.join(out_dir, "k_sweep.png")))
    paths.append(plot_latency_histogram(report, os.path.join(out_dir, "latency.png")))
    paths.append(plot_similarity_heatmap(
        index, save_path=os.path.join(out_dir, "similarity.png")))
    if len(index) >= 2:
        paths.append(plot_embeddings(index, os.path.join(out_dir, "embeddings.png")))
    cols = 2
    rows = (len(paths) + cols - 1) // cols
    paths.append(concatenate_images(paths, (rows, cols),
                                    os.path.join(out_dir, "dashboard.png")))
    return paths
