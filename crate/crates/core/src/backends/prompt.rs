use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Language};
use crate::error::{Error, Result};

pub const INPUT_SLOT: &str = "{input}";

const EN_TEMPLATE: &str = "You are a healthcare expert tasked with analyzing patient feedback. Your task is to:
1. Sentiment Analysis: Assign a relevant sentiment to each comment in the list of patient feedback provided. The sentiment can be:
- Positive
- Negative
- Neutral
- Mixed
2. Topic Identification: Identify and list the specific and meaningful topics mentioned in each patient feedback comment. The topics should reflect the patient's complaints and can have only a negative connotation.
Please provide the results in JSON format with the following keys:
- Comment
- Sentiment
- Topics
Here are the comments to analyze:
\"{input}\"";

const FR_TEMPLATE: &str = "Vous êtes un expert en santé chargé d'analyser des données textuelles relatives au domaine médical et à l'impact du COVID-19. Les données textuelles sont des articles d'actualité. Votre tâche consiste à :
1. Analyse des sentiments: Attribuer un sentiment pertinent à chaque texte dans la liste des données textuelles fournies. Le sentiment peut être :
- Positif
- Négatif
- Neutre
- Mitigé
2. Identification des sujets: Examiner et identifier les thèmes ou sujets spécifiques mentionnés dans chaque texte, tels que la violence sur les réseaux sociaux, la désinformation médicale, les menaces envers les professionnels de la santé, l'éthique médicale, l'impact sur l'économie, et les faits liés au sport.
Veuillez structurer les résultats au format JSON avec les clés suivantes :
- ID
- Sentiment
- Sujets
Chaque texte peut se voir attribuer un ou plusieurs thèmes/sujets. Les thèmes/sujets peuvent consister sur un mot ou des phrases très courtes.
Les thèmes/sujets doivent refléter des labels qui pourront par la suite être utilisés pour classifier ces données textes et ne doivent pas être des mots clés aléatoires.
Voici les textes à analyser :
\"{input}\"";

/// Prompt text with a single `{input}` slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub language: Language,
    pub text: String,
}

impl PromptTemplate {
    pub fn builtin(language: Language) -> Self {
        let text = match language {
            Language::En => EN_TEMPLATE,
            Language::Fr => FR_TEMPLATE,
        };
        PromptTemplate {
            language,
            text: text.to_string(),
        }
    }
}

/// Substitutes the batch, one quoted document per line, into the template.
pub fn render_prompt(batch: &[Document], template: &PromptTemplate) -> Result<String> {
    if batch.is_empty() {
        return Err(Error::domain("cannot render a prompt for an empty batch"));
    }
    if !template.text.contains(INPUT_SLOT) {
        return Err(Error::Config(format!(
            "prompt template ({}) has no {INPUT_SLOT} slot",
            template.language.tag()
        )));
    }
    let input = batch
        .iter()
        .map(|d| format!("\"{}\"", d.text))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(template.text.replacen(INPUT_SLOT, &input, 1))
}
