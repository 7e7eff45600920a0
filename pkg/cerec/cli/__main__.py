import functools
import logging
import sys
from pathlib import Path

import click
import numpy as np
from rich.console import Console
from rich.table import Table

from cerec import __version__
from cerec import settings
from cerec.cli.common import CerecGroup
from cerec.cli.common import FloatList
from cerec.cli.common import IntList
from cerec.cli.common import init_cli
from cerec.core import CerModel
from cerec.core import ContentFeatures
from cerec.core import DataError
from cerec.core import Hyperparams
from cerec.core import RatingMatrix
from cerec.core import ShapeError
from cerec.dataio.estimates import Estimates
from cerec.dataio.estimates import load_estimates
from cerec.dataio.estimates import save_estimates
from cerec.dataio.features import load_features
from cerec.dataio.features import save_features
from cerec.dataio.models import load_model
from cerec.dataio.models import save_model
from cerec.dataio.plans import load_plan
from cerec.dataio.plans import save_plan
from cerec.dataio.ratings import LIKE_THRESHOLD
from cerec.dataio.ratings import IdPolicy
from cerec.dataio.ratings import load_ratings
from cerec.dataio.ratings import save_ratings
from cerec.dataio.synthetic import SyntheticSpec
from cerec.dataio.synthetic import generate_synthetic
from cerec.evaluation import DEFAULT_NUM_FOLDS
from cerec.evaluation import NO_CONTENT
from cerec.evaluation import AccuracyTable
from cerec.evaluation import EstimatesScorer
from cerec.evaluation import FoldPlan
from cerec.evaluation import FusedScorer
from cerec.evaluation import MethodConfig
from cerec.evaluation import Scenario
from cerec.evaluation import evaluate as evaluate_scorer
from cerec.evaluation import make_fold_plan
from cerec.evaluation import make_scorer
from cerec.evaluation import run_cross_validation
from cerec.fusion import FusionMethod
from cerec.fusion import FusionSpec
from cerec.fusion import rank_contents
from cerec.training import bpr
from cerec.training import cer

logger = logging.getLogger(__name__)

DEFAULT_K_LIST = "5,10,15,20,25,30"

existing_file = click.Path(exists=True, dir_okay=False, path_type=Path)
output_file = click.Path(dir_okay=False, writable=True, path_type=Path)


def ratings_options(func):
    @click.option(
        "--ratings",
        "ratings_path",
        type=existing_file,
        required=True,
        help="Ratings file (user::video::rating::timestamp).",
    )
    @click.option(
        "--threshold",
        type=float,
        default=LIKE_THRESHOLD,
        show_default=True,
        help="Ratings at or above this value are likes.",
    )
    @click.option(
        "--id-policy",
        type=click.Choice([p.value for p in IdPolicy]),
        default=IdPolicy.DENSE.value,
        show_default=True,
        help="How external keys are numbered.",
    )
    @functools.wraps(func)
    def wrapper(*args, ratings_path, threshold, id_policy, **kwargs):
        loaded = load_ratings(ratings_path, IdPolicy(id_policy), threshold)
        return func(*args, ratings=loaded.ratings, **kwargs)

    return wrapper


def split_options(func):
    @ratings_options
    @click.option(
        "--plan", "plan_path", type=existing_file, required=True, help="Fold plan file."
    )
    @click.option(
        "--fold",
        type=click.IntRange(min=0),
        default=0,
        show_default=True,
        help="Fold configuration (0-based).",
    )
    @functools.wraps(func)
    def wrapper(*args, ratings, plan_path, fold, **kwargs):
        plan = load_plan(plan_path)
        plan.check_ratings(ratings)
        if fold >= plan.num_folds:
            raise click.BadParameter(
                f"the plan has {plan.num_folds} folds", param_hint="--fold"
            )
        return func(*args, ratings=ratings, plan=plan, fold=fold, **kwargs)

    return wrapper


def hyper_options(func):
    options = [
        click.option("--k", type=int, help="Latent dimension [default: 50]."),
        click.option("--lambda-u", type=float, help="User regularizer."),
        click.option("--lambda-v", type=float, help="Video offset regularizer."),
        click.option("--lambda-e", type=float, help="Embedding regularizer."),
        click.option("--conf-pos", type=float, help="Confidence of likes."),
        click.option("--conf-neg", type=float, help="Confidence of the other pairs."),
        click.option("--sweeps", type=int, help="Sweeps (BPR: epochs) [default: 200]."),
        click.option(
            "--tolerance",
            type=float,
            help="Stop once the relative objective decrease falls below this.",
        ),
        click.option("--lambda-i", type=float, help="BPR liked video regularizer."),
        click.option("--lambda-j", type=float, help="BPR other video regularizer."),
        click.option("--lambda-b", type=float, help="BPR bias regularizer."),
        click.option("--learning-rate", type=float, help="BPR learning rate."),
        click.option("--seed", type=int, default=0, show_default=True),
        click.option(
            "--threads",
            type=click.IntRange(min=1),
            help="Worker threads [default: from settings].",
        ),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _given(options: dict, names: tuple[str, ...]) -> dict:
    return {name: options[name] for name in names if options.get(name) is not None}


def _bpr_hyperparams(options: dict) -> bpr.BprHyperparams:
    kwargs = _given(
        options, ("k", "lambda_u", "lambda_i", "lambda_j", "lambda_b", "learning_rate")
    )
    if options.get("sweeps") is not None:
        kwargs["epochs"] = options["sweeps"]
    return bpr.BprHyperparams(**kwargs)


def _cer_hyperparams(method: str, options: dict) -> Hyperparams:
    names = ("k", "lambda_u", "lambda_v", "lambda_e", "conf_pos", "conf_neg", "tolerance")
    kwargs = _given(options, names)
    kwargs.setdefault("tolerance", settings.EARLY_STOP_TOLERANCE)
    if options.get("sweeps") is not None:
        kwargs["max_sweeps"] = options["sweeps"]
    if method == "wmf":
        return Hyperparams.wmf(**kwargs)
    return Hyperparams(**kwargs)


def _method_name(model) -> str:
    if isinstance(model, bpr.BprModel):
        return "bpr"
    return "wmf" if model.is_wmf else "cer"


def _check_model(model, ratings: RatingMatrix):
    if (model.num_users, model.num_videos) != ratings.shape:
        raise ShapeError(
            f"model is {model.num_users}×{model.num_videos}, ratings are "
            f"{ratings.num_users}×{ratings.num_videos}"
        )


def _model_features(model, path: Path | None, ratings: RatingMatrix):
    """Content features for ``model``; content-free models ignore them."""
    if path is None:
        return None
    if isinstance(model, bpr.BprModel) or model.is_wmf:
        logger.warning("%s model has no content embedding, ignoring %s", _method_name(model), path)
        return None
    return load_features(path, ratings.num_videos)


@click.group(cls=CerecGroup)
@click.version_option(__version__, prog_name="cerec")
def main():
    """cerec - collaborative embedding regression for video recommendation.

    Every stage of the experiment pipeline is one command and files are the
    interchange: synth or real ratings, split, train, predict, evaluate and
    fuse. crossval runs the whole protocol in one go.
    """
    init_cli()


@main.command()
@click.option("--users", type=click.IntRange(min=1), default=200, show_default=True)
@click.option("--videos", type=click.IntRange(min=1), default=100, show_default=True)
@click.option("--dim", type=click.IntRange(min=1), default=20, show_default=True)
@click.option("--rank", type=click.IntRange(min=1), default=5, show_default=True)
@click.option("--noise", type=click.FloatRange(min=0), default=0.1, show_default=True)
@click.option(
    "--quantile",
    type=click.FloatRange(0, 1, min_open=True, max_open=True),
    default=0.9,
    show_default=True,
    help="Per-user score quantile above which videos are liked.",
)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--content-name", default="synthetic", show_default=True)
@click.option("--ssr", is_flag=True, help="Apply signed square root to the features.")
@click.option(
    "--out-dir",
    type=click.Path(file_okay=False, path_type=Path),
    required=True,
    help="Directory receiving ratings.dat, <content>.features and truth.model.",
)
def synth(users, videos, dim, rank, noise, quantile, seed, content_name, ssr, out_dir):
    """Generate planted-model ratings and content features."""
    spec = SyntheticSpec(
        m=users,
        n=videos,
        d=dim,
        k_true=rank,
        noise_std=noise,
        like_quantile=quantile,
        seed=seed,
        content_name=content_name,
    )
    ratings, features, truth = generate_synthetic(spec, ssr=ssr)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_ratings(truth.raw_records(), out_dir / "ratings.dat")
    save_features(features, out_dir / f"{content_name}.features")
    save_model(truth.truth_model(), out_dir / "truth.model")
    click.echo(
        f"Wrote {ratings.nnz} likes of {users} users on {videos} videos to {out_dir}"
    )


@main.command()
@ratings_options
@click.option(
    "--folds",
    type=click.IntRange(min=2),
    default=DEFAULT_NUM_FOLDS,
    show_default=True,
)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=output_file, required=True, help="Plan file to write.")
def split(ratings, folds, seed, out):
    """Assign videos to folds and likes to partitions."""
    plan = make_fold_plan(ratings, folds, seed)
    save_plan(plan, out)
    shares = np.mean([list(plan.proportions(f).values()) for f in range(folds)], axis=0)
    click.echo(
        "Mean shares train/in-matrix/out-of-matrix: "
        + "/".join(f"{share:.3f}" for share in shares)
    )


@main.command()
@click.option(
    "--method",
    type=click.Choice(["cer", "wmf", "bpr"]),
    default="cer",
    show_default=True,
)
@split_options
@click.option("--features", "features_path", type=existing_file, help="Content features.")
@hyper_options
@click.option("--out", type=output_file, required=True, help="Model file to write.")
@click.option(
    "--log",
    "log_path",
    type=output_file,
    help="Training log, one objective per sweep [default: <out>.log].",
)
def train(
    method, ratings, plan, fold, features_path, seed, threads, out, log_path, **options
):
    """Train a model on the TRAIN likes of one fold."""
    if method == "cer" and features_path is None:
        raise click.UsageError("--method cer needs --features")
    if method != "cer" and features_path is not None:
        logger.warning("%s does not use content, ignoring %s", method, features_path)
        features_path = None

    train_ratings = plan.train_ratings(ratings, fold)
    model: CerModel | bpr.BprModel
    if method == "bpr":
        model, trace = bpr.fit_bpr(train_ratings, _bpr_hyperparams(options), seed)
    else:
        hyper = _cer_hyperparams(method, options)
        features = (
            None
            if features_path is None
            else load_features(features_path, ratings.num_videos)
        )
        model, report = cer.fit(train_ratings, features, hyper, seed, threads=threads)
        trace = report.objective_per_sweep

    save_model(model, out)
    log_path = log_path or out.with_name(out.name + ".log")
    with open(log_path, "w", encoding="ascii", newline="\n") as fp:
        for sweep, value in enumerate(trace, start=1):
            fp.write(f"{sweep} {value:.17g}\n")
    click.echo(f"Wrote {model!r} to {out} after {len(trace)} sweeps")


@main.command()
@click.option("--model", "model_path", type=existing_file, required=True)
@split_options
@click.option("--features", "features_path", type=existing_file, help="Content features.")
@click.option("--out", type=output_file, required=True, help="Estimates file to write.")
def predict(model_path, ratings, plan, fold, features_path, out):
    """Write out-of-matrix estimates of every user over the fold's cold videos."""
    model = load_model(model_path)
    _check_model(model, ratings)
    features = _model_features(model, features_path, ratings)
    scorer = make_scorer(model, Scenario.OUT_MATRIX, features)
    candidates = plan.fold_videos(fold)
    scores = scorer.score(np.arange(ratings.num_users), candidates)
    name = features.content_name if features is not None else NO_CONTENT
    save_estimates(Estimates(name, candidates, scores), out)
    click.echo(f"Wrote {name} estimates for {len(candidates)} videos to {out}")


@main.command()
@click.option("--model", "model_path", type=existing_file, required=True)
@split_options
@click.option(
    "--scenario",
    type=click.Choice([s.value for s in Scenario]),
    default=Scenario.IN_MATRIX.value,
    show_default=True,
)
@click.option("--features", "features_path", type=existing_file, help="Content features.")
@click.option("--k-list", type=IntList(), default=DEFAULT_K_LIST, show_default=True)
@click.option("--out", type=click.File("w"), default="-", help="Accuracy CSV.")
def evaluate(model_path, ratings, plan, fold, scenario, features_path, k_list, out):
    """Accuracy@k of a trained model in one scenario."""
    model = load_model(model_path)
    _check_model(model, ratings)
    scenario = Scenario(scenario)
    features = _model_features(model, features_path, ratings)
    scorer = make_scorer(model, scenario, features)
    table = AccuracyTable()
    table.add(
        _method_name(model),
        features.content_name if features is not None else NO_CONTENT,
        scenario,
        fold,
        evaluate_scorer(scorer, ratings, plan, fold, scenario, k_list),
    )
    table.to_csv(out)


def _fusion_spec(
    names: list[str],
    method: str,
    p: float,
    weights: tuple[float, ...] | None,
    validation: AccuracyTable | None,
    validation_k: int,
) -> FusionSpec:
    if weights is not None:
        if len(weights) != len(names):
            raise click.BadParameter(
                f"{len(weights)} weights for {len(names)} estimates files",
                param_hint="--weights",
            )
        return FusionSpec.external(names, weights)
    if validation is None:
        order = names
        if method == FusionMethod.GEOMETRIC.value:
            logger.warning("No validation accuracies, ranking contents as given")
    else:
        accuracies = validation.validation_accuracies(Scenario.OUT_MATRIX, validation_k)
        missing = set(names) - set(accuracies)
        if missing:
            raise DataError(
                f"no out-of-matrix Accuracy@{validation_k} for {', '.join(sorted(missing))}"
            )
        order = list(rank_contents({name: accuracies[name] for name in names}))
    if method == FusionMethod.AVERAGE.value:
        return FusionSpec.average(order)
    return FusionSpec.geometric(order, p)


@main.command()
@click.option(
    "--estimates",
    "estimates_paths",
    type=existing_file,
    multiple=True,
    required=True,
    help="Estimates file of one content; repeat for every content.",
)
@split_options
@click.option(
    "--method",
    type=click.Choice([FusionMethod.AVERAGE.value, FusionMethod.GEOMETRIC.value]),
    default=FusionMethod.GEOMETRIC.value,
    show_default=True,
)
@click.option("--p", type=float, default=0.5, show_default=True, help="Geometric ratio.")
@click.option(
    "--validation-accuracies",
    "validation_path",
    type=existing_file,
    help="Accuracy CSV used to rank the contents.",
)
@click.option(
    "--validation-k",
    type=click.IntRange(min=1),
    help="k of the ranking accuracy [default: from settings].",
)
@click.option(
    "--weights",
    type=FloatList(),
    help="Externally learned weights, in the order of --estimates.",
)
@click.option(
    "--normalize/--no-normalize",
    default=None,
    help="Z-score every content's estimates per user [default: from settings].",
)
@click.option("--k-list", type=IntList(), default=DEFAULT_K_LIST, show_default=True)
@click.option("--spec-out", type=output_file, help="Write the fusion spec here.")
@click.option("--out", type=click.File("w"), default="-", help="Accuracy CSV.")
def fuse(
    estimates_paths,
    ratings,
    plan: FoldPlan,
    fold,
    method,
    p,
    validation_path,
    validation_k,
    weights,
    normalize,
    k_list,
    spec_out,
    out,
):
    """Late fusion of per-content out-of-matrix estimates."""
    estimates: dict[str, Estimates] = {}
    for path in estimates_paths:
        loaded = load_estimates(path)
        if loaded.content_name in estimates:
            raise click.BadParameter(
                f"two estimates files for {loaded.content_name}",
                param_hint="--estimates",
            )
        if loaded.num_users != ratings.num_users:
            raise ShapeError(
                f"{path} has estimates for {loaded.num_users} users, "
                f"ratings have {ratings.num_users}"
            )
        estimates[loaded.content_name] = loaded

    validation = (
        None if validation_path is None else AccuracyTable.read_csv(validation_path)
    )
    spec = _fusion_spec(
        list(estimates),
        method,
        p,
        weights,
        validation,
        validation_k or settings.VALIDATION_K,
    )
    logger.info(
        "Fusing %s with weights %s",
        ", ".join(spec.ordered_contents),
        ", ".join(f"{w:g}" for w in spec.weights),
    )
    if spec_out is not None:
        with open(spec_out, "w", encoding="ascii") as fp:
            spec.dump(fp)

    scorer = FusedScorer(
        {name: EstimatesScorer(e) for name, e in estimates.items()}, spec, normalize
    )
    table = AccuracyTable()
    table.add(
        f"fusion+{spec.method.value}",
        "+".join(spec.ordered_contents),
        Scenario.OUT_MATRIX,
        fold,
        evaluate_scorer(scorer, ratings, plan, fold, Scenario.OUT_MATRIX, k_list),
    )
    table.to_csv(out)


def print_summary(table: AccuracyTable, console: Console):
    summary = Table(show_header=True, header_style="bold magenta")
    for column in ("Method", "Content", "Scenario", "k"):
        summary.add_column(column)
    summary.add_column("Accuracy", justify="right")
    summary.add_column("Folds", justify="right")
    for row in table.summary().itertuples(index=False):
        summary.add_row(
            row.method,
            row.content,
            row.scenario,
            str(row.k),
            f"{row.mean:.4f} ± {row.std:.4f}",
            str(row.count),
        )
    console.print(summary)


@main.command()
@ratings_options
@click.option(
    "--features",
    "features_paths",
    type=existing_file,
    multiple=True,
    help="Content features; repeat for every content.",
)
@click.option(
    "--method",
    type=click.Choice(MethodConfig.NAMES),
    default="cer",
    show_default=True,
)
@click.option(
    "--fusion",
    type=click.Choice([FusionMethod.AVERAGE.value, FusionMethod.GEOMETRIC.value]),
    help="Also evaluate the fused out-of-matrix ranking (cer only).",
)
@click.option("--p", type=float, default=0.5, show_default=True, help="Geometric ratio.")
@click.option(
    "--validation-k",
    type=click.IntRange(min=1),
    help="k of the accuracy ranking the contents [default: from settings].",
)
@click.option(
    "--folds", type=click.IntRange(min=2), default=DEFAULT_NUM_FOLDS, show_default=True
)
@click.option(
    "--only-fold",
    type=click.IntRange(min=0),
    multiple=True,
    help="Run only these fold configurations.",
)
@click.option("--plan", "plan_path", type=existing_file, help="Use this fold plan.")
@click.option("--k-list", type=IntList(), default=DEFAULT_K_LIST, show_default=True)
@hyper_options
@click.option("--out", type=output_file, help="Accuracy CSV with one row per fold.")
def crossval(
    ratings,
    features_paths,
    method,
    fusion,
    p,
    validation_k,
    folds,
    only_fold,
    plan_path,
    k_list,
    seed,
    threads,
    out,
    **options,
):
    """Run the whole cross validation protocol and summarize it."""
    features_by_content: dict[str, ContentFeatures] = {}
    if method == "cer":
        for path in features_paths:
            features = load_features(path, ratings.num_videos)
            if features.content_name in features_by_content:
                raise click.BadParameter(
                    f"two feature files for {features.content_name}",
                    param_hint="--features",
                )
            features_by_content[features.content_name] = features
    elif features_paths:
        logger.warning("%s does not use content, ignoring the features", method)

    hyper: Hyperparams | bpr.BprHyperparams | None = None
    if method == "bpr":
        hyper = _bpr_hyperparams(options)
    elif method in ("cer", "wmf"):
        hyper = _cer_hyperparams(method, options)
    config = MethodConfig(
        method,
        hyper,
        seed,
        None if fusion is None else FusionMethod(fusion),
        p,
        validation_k,
    )
    plan = None if plan_path is None else load_plan(plan_path)
    table = run_cross_validation(
        ratings,
        features_by_content,
        config,
        k_list,
        folds,
        seed,
        folds=list(only_fold) or None,
        plan=plan,
        threads=threads,
    )
    if out is not None:
        table.to_csv(out)
    print_summary(table, Console(file=sys.stdout))


if __name__ == "__main__":
    main()
