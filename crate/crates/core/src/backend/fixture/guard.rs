use std::sync::LazyLock;

use regex::Regex;

use crate::guardrails::{GuardrailVerdict, ViolationCategory};

static RULES: LazyLock<Vec<(ViolationCategory, Regex)>> = LazyLock::new(|| {
    use ViolationCategory::*;
    let table: &[(ViolationCategory, &str)] = &[
        (CodeInterpreterAbuse, r"\b(instructions?|prompts?|rules|guidelines)\b.{0,30}\b(given|provided|gave)\b.{0,10}\b(to )?you\b"),
        (CodeInterpreterAbuse, r"\b(ignore|disregard|forget|bypass|override)\b.{0,30}\b(previous|prior|above|earlier|all|your|safety)\b.{0,20}\b(instructions?|rules|prompts?|constraints|filters?)\b"),
        (CodeInterpreterAbuse, r"\b(reveal|show|print|tell|repeat|display|leak|dump)\b.{0,30}\b(your|the|system)\s+(system\s+)?(prompt|instructions?|rules|guidelines|configuration|output format)\b"),
        (CodeInterpreterAbuse, r"\b(jailbreak|dan mode|developer mode|pretend (you are|to be)|act as (an? )?(unrestricted|unfiltered))\b"),
        (ViolentCrimes, r"\b(bombs?|explosives?|grenades?|kill|murder|shoot|stab|poison (someone|him|her)|terroris[mt]\w*|assault|kidnap\w*|torture)\b"),
        (ViolentCrimes, r"\b(make|build|buy|get)\b.{0,15}\b(guns?|weapons?|firearms?)\b"),
        (SexRelatedCrimes, r"\b(porn\w*|nudes?|sexual (content|images?|services)|child (sexual|abuse)|prostitut\w*|explicit (photos?|images?|content))\b"),
        (NonViolentCrimes, r"\blaunder(ing)?\s+(the\s+)?(money|funds|cash)\b"),
        (NonViolentCrimes, r"\bhow (do|can|to|could) (i |we )?(steal|hack|scam|defraud|phish|launder|forge|counterfeit|smuggle)\b"),
        (NonViolentCrimes, r"\b(help me|teach me to) (steal|hack|scam|cheat|defraud|phish|forge)\b"),
        (NonViolentCrimes, r"\b(buy|sell|deal) (drugs|cocaine|meth|heroin|ganja|weed)\b"),
        (NonViolentCrimes, r"\b(hack into|steal (money|from|someone)|evade (tax|taxes)|fake (ic|mykad|id|documents?))\b"),
        (Privacy, r"\b(someone else'?s|another (person|customer|user)'?s?|other (customers|users)'?)\b.{0,30}\b(account|balance|nric|ic|mykad|address|phone|details|password|pin|data|transactions?)\b"),
        (Privacy, r"\b(what is|what's|tell me|give me|show me|find|look up)\b.{0,15}\b[a-z]+'s\s+(password|pin|nric|ic number|mykad|home address|balance|account balance)\b"),
        (DefamationMisinformationUnethical, r"\b(fake news|spread (rumou?rs|lies|misinformation)|fake reviews?|defame|slander)\b"),
        (DefamationMisinformationUnethical, r"\b(write|create)\b.{0,20}\b(false|fake|misleading) (claims?|statements?|story|article)\b"),
        (ControversialTopicsPolitics, r"\b(which|what) (political )?party\b|\b(vote for|elections?|prime minister|politic\w*|abortion|which religion)\b"),
        (Hate, r"\b(fuck\w*|shit\w*|bitch\w*|bastard|asshole|bodoh|babi|sial|stupid bot|idiot)\b"),
        (Hate, r"\b(i hate|all) \w+ (people|are (dirty|stupid|inferior|animals))\b"),
    ];
    table
        .iter()
        .map(|(c, p)| (*c, Regex::new(&format!("(?i){p}")).expect("guardrail rule compiles")))
        .collect()
});

pub(super) fn classify(text: &str) -> GuardrailVerdict {
    RULES
        .iter()
        .find(|(_, re)| re.is_match(text))
        .map(|(c, _)| GuardrailVerdict::violation(*c))
        .unwrap_or_else(GuardrailVerdict::safe)
}
