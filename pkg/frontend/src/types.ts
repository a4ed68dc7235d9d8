// Wire types mirroring the service's session JSON schema.

export type ActorKind = 'human' | 'external_system' | 'hardware';

export interface ActorJson {
  id: string;
  name: string;
  kind: ActorKind;
  source_spans: [number, number][];
}

export interface UseCaseJson {
  id: string;
  title: string;
  actor_ids: string[];
  source_spans: [number, number][];
}

export interface AssociationJson {
  actor_id: string;
  usecase_id: string;
}

export interface RelationJson {
  from_id: string;
  to_id: string;
  kind: 'include' | 'extend';
}

export interface ModelJson {
  system_name: string;
  actors: ActorJson[];
  use_cases: UseCaseJson[];
  associations: AssociationJson[];
  relations: RelationJson[];
}

export interface DescriptionJson {
  usecase_id: string;
  preconditions: string[];
  main_flow: string[];
  alternative_flows: { label: string; steps: string[] }[];
  postconditions: string[];
}

export type StageName =
  | 'created'
  | 'actors_proposed'
  | 'actors_confirmed'
  | 'usecases_proposed'
  | 'usecases_confirmed'
  | 'model_proposed'
  | 'model_confirmed'
  | 'descriptions_done';

export interface EditJson {
  stage: StageName;
  kind: 'add' | 'remove' | 'rename' | 'relink';
  target_id?: string | null;
  payload?: Record<string, unknown>;
}

export interface TimingJson {
  label: string;
  started_at: string;
  ended_at: string | null;
  minutes: number | null;
}

export interface WarningJson {
  code: string;
  message: string;
  stage: StageName;
  target_id: string | null;
}

export interface SessionView {
  id: string;
  requirements: { id: string; title: string; text: string };
  stage: StageName;
  proposed_actors: ActorJson[];
  confirmed_actors: ActorJson[];
  proposed_usecases: UseCaseJson[];
  confirmed_usecases: UseCaseJson[];
  model_source: string | null;
  model: ModelJson | null;
  descriptions: DescriptionJson[];
  edit_log: EditJson[];
  timings: TimingJson[];
  warnings: WarningJson[];
  created_at: string;
}

export interface SessionSummary {
  id: string;
  title: string;
  stage: StageName;
  created_at: string;
}
