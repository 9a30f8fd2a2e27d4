//! Terminal session: the user plays the human collaborator.

use std::io::{BufRead, Write};

use trust_pomdp::learning::{Episode, EpisodeMetadata, LogSource, LogStep, MUIR_ITEMS};
use trust_pomdp::pomdp::{belief_update, policy_action, Policy};
use trust_pomdp::rng::rng_from_seed;
use trust_pomdp::task::{resolve_outcome, ObjectStatus, TaskConfig, TaskError, TaskModel};
use trust_pomdp::trust::HumanAction;

use crate::error::CliError;

fn io(e: std::io::Error) -> CliError {
    CliError::runtime("IO_ERROR", e.to_string())
}

fn read_line(input: &mut impl BufRead) -> Result<String, CliError> {
    let mut line = String::new();
    if input.read_line(&mut line).map_err(io)? == 0 {
        return Err(CliError::runtime("INPUT_CLOSED", "input ended before the episode finished".into()));
    }
    Ok(line.trim().to_lowercase())
}

fn ask_action(input: &mut impl BufRead, output: &mut impl Write) -> Result<HumanAction, CliError> {
    loop {
        write!(output, "[s]tay put or [i]ntervene? ").map_err(io)?;
        output.flush().map_err(io)?;
        match read_line(input)?.as_str() {
            "s" | "stay" | "stay put" | "stayput" => return Ok(HumanAction::StayPut),
            "i" | "intervene" => return Ok(HumanAction::Intervene),
            _ => writeln!(output, "please answer s or i").map_err(io)?,
        }
    }
}

/// Four item scores in [1, 7], or `None` when the user skips.
fn ask_rating(input: &mut impl BufRead, output: &mut impl Write) -> Result<Option<Vec<f64>>, CliError> {
    loop {
        write!(output, "trust rating: {MUIR_ITEMS} scores from 1 to 7, blank to skip: ").map_err(io)?;
        output.flush().map_err(io)?;
        let line = read_line(input)?;
        if line.is_empty() {
            return Ok(None);
        }
        let items: Option<Vec<f64>> = line.split([' ', ',']).filter(|s| !s.is_empty()).map(|s| s.parse().ok()).collect();
        match items {
            Some(items) if items.len() == MUIR_ITEMS && items.iter().all(|x| (1.0..=7.0).contains(x)) => {
                return Ok(Some(items))
            }
            _ => writeln!(output, "expected {MUIR_ITEMS} numbers between 1 and 7").map_err(io)?,
        }
    }
}

fn mean(items: &[f64]) -> f64 {
    items.iter().sum::<f64>() / items.len() as f64
}

fn status_text(s: ObjectStatus) -> &'static str {
    match s {
        ObjectStatus::OnTable => "on table",
        ObjectStatus::RemovedRobotSuccess => "cleared by robot",
        ObjectStatus::RemovedRobotFail => "dropped by robot",
        ObjectStatus::RemovedHuman => "cleared by you",
    }
}

pub fn play(
    config: &TaskConfig,
    model: &TaskModel,
    policy: &Policy,
    seed: u64,
    label: String,
    input: &mut impl BufRead,
    output: &mut impl Write,
) -> Result<Episode, CliError> {
    let mut rng = rng_from_seed(seed);
    let mut v = model.initial_visible();
    let mut belief = model.initial_belief().clone();
    let initial = ask_rating(input, output)?;
    let mut episode = Episode {
        initial_muir: initial.as_deref().map(mean),
        initial_muir_items: initial,
        steps: Vec::new(),
        metadata: EpisodeMetadata {
            source: LogSource::Session,
            config: Some(label),
            object_count: Some(config.objects.len()),
            seed: Some(seed),
        },
    };
    let mut total = 0.0;
    while !model.is_terminal(v) {
        let world = model.world(v).clone();
        writeln!(output).map_err(io)?;
        for (o, s) in config.objects.iter().zip(&world.statuses) {
            writeln!(output, "  {}#{}: {}", o.category, o.id, status_text(*s)).map_err(io)?;
        }
        let a = policy_action(policy, v, &belief)?;
        let spec = model.actions[a];
        writeln!(output, "robot reaches for {}", model.action_name(a)).map_err(io)?;
        let human = ask_action(input, output)?;
        let (next_world, outcome, reward) = resolve_outcome(config, &world, spec, human, &mut rng)?;
        let next = model.state_index(&next_world).ok_or(TaskError::UnknownWorldState)?;
        belief = belief_update(model, &belief, v, a, next)?;
        v = next;
        total += reward;
        writeln!(output, "{}: reward {reward}, total {total}", status_text(next_world.statuses[spec.target_object]))
            .map_err(io)?;
        let rating = ask_rating(input, output)?;
        episode.steps.push(LogStep {
            robot_action: spec,
            human_action: human,
            outcome,
            post_muir: rating.as_deref().map(mean),
            post_muir_items: rating,
        });
    }
    writeln!(output, "episode finished with total reward {total}").map_err(io)?;
    Ok(episode)
}
